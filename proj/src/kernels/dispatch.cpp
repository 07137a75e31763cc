#include "trico/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace trico::kernels {

namespace {

struct Table {
    double (*dot)(const double*, const double*, std::size_t) noexcept;
    void (*axpy)(double, const double*, double*, std::size_t) noexcept;
    void (*scale)(double, double*, std::size_t) noexcept;
    double (*sum_squares)(const double*, std::size_t) noexcept;
};

constexpr Table kScalar{&scalar::dot, &scalar::axpy, &scalar::scale, &scalar::sum_squares};
constexpr Table kAvx2{&avx2::dot, &avx2::axpy, &avx2::scale, &avx2::sum_squares};

Isa initial_isa() noexcept {
    const bool have = cpu_has_avx2();
    if (const char* env = std::getenv("TRICO_KERNELS")) {
        std::string_view v(env);
        if (v == "scalar") return Isa::scalar;
        if (v == "avx2" && have) return Isa::avx2;
    }
    return have ? Isa::avx2 : Isa::scalar;
}

std::atomic<const Table*>& table() noexcept {
    static std::atomic<const Table*> t{initial_isa() == Isa::avx2 ? &kAvx2 : &kScalar};
    return t;
}

}  // namespace

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

Isa active_isa() noexcept { return table().load(std::memory_order_relaxed) == &kAvx2 ? Isa::avx2 : Isa::scalar; }

bool force_isa(Isa isa) noexcept {
    if (isa == Isa::avx2 && !cpu_has_avx2()) return false;
    table().store(isa == Isa::avx2 ? &kAvx2 : &kScalar, std::memory_order_relaxed);
    return true;
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::avx2 ? "avx2" : "scalar"; }

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    return table().load(std::memory_order_relaxed)->dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
    table().load(std::memory_order_relaxed)->axpy(alpha, x.data(), y.data(), x.size());
}

void scale(double alpha, std::span<double> x) noexcept {
    table().load(std::memory_order_relaxed)->scale(alpha, x.data(), x.size());
}

double sum_squares(std::span<const double> x) noexcept {
    return table().load(std::memory_order_relaxed)->sum_squares(x.data(), x.size());
}

}  // namespace trico::kernels

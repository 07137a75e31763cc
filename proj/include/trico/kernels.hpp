#pragma once

// Inner-loop arithmetic used by the student MLP. Each kernel has a scalar
// reference and an AVX2 variant; the variant is chosen once at startup from
// CPUID and can be overridden with TRICO_KERNELS=scalar|avx2 or force_isa().
//
// axpy is bit-identical across variants (no FMA contraction). dot reorders the
// reduction, so variants agree only to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace trico::kernels {

enum class Isa { scalar, avx2 };

namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
double sum_squares(const double* x, std::size_t n) noexcept;
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
void scale(double alpha, double* x, std::size_t n) noexcept;
double sum_squares(const double* x, std::size_t n) noexcept;
}  // namespace avx2

bool cpu_has_avx2() noexcept;

/// ISA currently used by the dispatching entry points below.
Isa active_isa() noexcept;

/// Overrides dispatch. Requesting avx2 on a CPU without it is ignored and returns false.
bool force_isa(Isa isa) noexcept;

std::string_view isa_name(Isa isa) noexcept;

double dot(std::span<const double> a, std::span<const double> b) noexcept;
void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept;
void scale(double alpha, std::span<double> x) noexcept;
double sum_squares(std::span<const double> x) noexcept;

}  // namespace trico::kernels

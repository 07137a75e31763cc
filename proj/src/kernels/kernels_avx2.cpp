#include "trico/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define TRICO_X86 1
#else
#define TRICO_X86 0
#endif

namespace trico::kernels::avx2 {

#if TRICO_X86

namespace {

__attribute__((target("avx2"))) inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

__attribute__((target("avx2"))) double dot(const double* a, const double* b, std::size_t n) noexcept {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// mul then add, never fused: keeps results bit-identical to the scalar path.
__attribute__((target("avx2"))) void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

__attribute__((target("avx2"))) void scale(double alpha, double* x, std::size_t n) noexcept {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    for (; i < n; ++i) x[i] *= alpha;
}

__attribute__((target("avx2"))) double sum_squares(const double* x, std::size_t n) noexcept {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

#else

double dot(const double* a, const double* b, std::size_t n) noexcept { return scalar::dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept { scalar::axpy(alpha, x, y, n); }
void scale(double alpha, double* x, std::size_t n) noexcept { scalar::scale(alpha, x, n); }
double sum_squares(const double* x, std::size_t n) noexcept { return scalar::sum_squares(x, n); }

#endif

}  // namespace trico::kernels::avx2

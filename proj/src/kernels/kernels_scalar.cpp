#include "trico/kernels.hpp"

namespace trico::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void scale(double alpha, double* x, std::size_t n) noexcept {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double sum_squares(const double* x, std::size_t n) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return s;
}

}  // namespace trico::kernels::scalar

#include "trico/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "trico/error.hpp"

namespace trico {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, Vector data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw InvalidInput("DenseMatrix: data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(rows) + "x" + std::to_string(cols));
}

bool DenseMatrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix DenseMatrix::gather_rows(std::span<const std::size_t> indices) const {
    DenseMatrix out(indices.size(), cols_);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows_) throw InvalidInput("gather_rows: index out of range");
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * cols_), cols_,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
    }
    return out;
}

ProbVector::ProbVector(Vector probs) : probs_(std::move(probs)) {
    if (probs_.size() < 2) throw InvalidInput("ProbVector: need at least 2 classes");
    double sum = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("ProbVector: entry outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidInput("ProbVector: entries do not sum to 1");
}

std::size_t ProbVector::argmax() const noexcept {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double ProbVector::max() const noexcept { return *std::max_element(probs_.begin(), probs_.end()); }

void softmax_into(std::span<const double> logits, std::span<double> out) noexcept {
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    const double inv = 1.0 / sum;
    for (double& v : out) v *= inv;
}

ProbVector softmax(std::span<const double> logits) {
    if (logits.size() < 2) throw InvalidInput("softmax: need at least 2 logits");
    for (double z : logits)
        if (!std::isfinite(z)) throw InvalidInput("softmax: non-finite logit");
    Vector out(logits.size());
    softmax_into(logits, out);
    return ProbVector(std::move(out), ProbVector::Unchecked{});
}

double entropy_unchecked(std::span<const double> p) noexcept {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double entropy(std::span<const double> p) {
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("entropy: entry outside [0,1]");
    return entropy_unchecked(p);
}

double cross_entropy(const ProbVector& p, std::size_t y) {
    if (y >= p.size()) throw InvalidInput("cross_entropy: class index out of range");
    return -std::log(std::max(p[y], kProbFloor));
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h) {
    if (!(h > 0.0)) throw InvalidInput("finite_diff_grad: step must be positive");
    Vector probe(x.begin(), x.end());
    Vector grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = f(probe);
        probe[i] = x[i] - h;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down))
            throw OracleFailure("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double logit(double p) noexcept {
    if (p <= 0.0) return -INFINITY;
    if (p >= 1.0) return INFINITY;
    return std::log(p) - std::log1p(-p);
}

double gelu(double u) noexcept { return 0.5 * u * (1.0 + std::erf(u * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double u) noexcept {
    const double cdf = 0.5 * (1.0 + std::erf(u * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * u * u) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + u * pdf;
}

double population_variance(std::span<const double> values) {
    if (values.empty()) throw InvalidInput("population_variance: empty input");
    // Deviations from the first value, so a constant sequence gives exactly 0.
    const double shift = values[0];
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v - shift;
    mean /= n;
    double acc = 0.0;
    for (double v : values) acc += (v - shift - mean) * (v - shift - mean);
    return acc / n;
}

double norm_inf(std::span<const double> v) noexcept {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace trico

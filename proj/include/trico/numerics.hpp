#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace trico {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    /// Throws InvalidInput if data.size() != rows*cols.
    DenseMatrix(std::size_t rows, std::size_t cols, Vector data);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }

    bool all_finite() const noexcept;

    /// New matrix holding the selected rows in order.
    DenseMatrix gather_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

/// Distribution over C >= 2 classes; entries in [0,1] summing to 1 within 1e-9.
class ProbVector {
public:
    /// Validates; throws InvalidInput on violation.
    explicit ProbVector(Vector probs);

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const noexcept { return probs_[i]; }
    std::span<const double> values() const noexcept { return probs_; }
    /// Index of the largest entry, lowest index on ties.
    std::size_t argmax() const noexcept;
    double max() const noexcept;

    friend bool operator==(const ProbVector&, const ProbVector&) = default;

private:
    struct Unchecked {};
    ProbVector(Vector probs, Unchecked) : probs_(std::move(probs)) {}
    friend ProbVector softmax(std::span<const double> logits);

    Vector probs_;
};

inline constexpr double kProbFloor = 1e-12;

/// Max-subtracted softmax. Throws InvalidInput on non-finite input or length < 2.
ProbVector softmax(std::span<const double> logits);

/// Writes softmax into out (same length as logits) without validation; hot-path helper.
void softmax_into(std::span<const double> logits, std::span<double> out) noexcept;

/// Shannon entropy in nats with 0 log 0 = 0. Throws InvalidInput on entries outside [0,1].
double entropy(std::span<const double> p);
inline double entropy(const ProbVector& p) { return entropy(p.values()); }

/// Unvalidated entropy for internal use on softmax outputs.
double entropy_unchecked(std::span<const double> p) noexcept;

/// -log(max(p[y], 1e-12)). Throws InvalidInput when y is out of range.
double cross_entropy(const ProbVector& p, std::size_t y);

/// Central-difference gradient. Throws OracleFailure on non-finite evaluations,
/// InvalidInput when h <= 0.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double h);

double sigmoid(double z) noexcept;
/// Inverse of sigmoid; logit(0) = -inf, logit(1) = +inf.
double logit(double p) noexcept;

/// Exact (erf) GELU and its derivative.
double gelu(double u) noexcept;
double gelu_grad(double u) noexcept;

/// Population variance (divides by n). Requires n >= 1.
double population_variance(std::span<const double> values);

double norm_inf(std::span<const double> v) noexcept;

}  // namespace trico

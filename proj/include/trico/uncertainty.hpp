#pragma once

// Monte Carlo dropout statistics and pseudo-label filters.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "trico/numerics.hpp"

namespace trico {

struct UncertaintyEstimate {
    ProbVector mean;
    double predictive_entropy = 0.0;  // H[p̄]
    double expected_entropy = 0.0;    // (1/K) Σ H[p_k]
    double mi = 0.0;                  // predictive - expected, clamped at 0
    std::size_t pseudo_label = 0;     // argmax p̄, lowest index on ties
};

/// Elementwise mean. Throws InvalidInput on an empty list or unequal lengths.
ProbVector predictive_mean(std::span<const ProbVector> samples);

/// BALD-style mutual information between prediction and dropout mask.
UncertaintyEstimate mutual_information(std::span<const ProbVector> samples);

enum class FilterDirection { above, below };

struct FilterResult {
    std::vector<std::size_t> accepted;  // ascending indices
    double mask_rate = 0.0;             // 1 - |accepted| / N (0 for N = 0)
};

/// above: keep mi > tau; below: keep mi < tau. Ties rejected.
FilterResult mi_filter(std::span<const UncertaintyEstimate> estimates, double tau, FilterDirection direction);

/// Keep max(p̄) >= tau.
FilterResult confidence_filter(std::span<const UncertaintyEstimate> estimates, double tau);

/// Fraction of accepted pseudo-labels that disagree with the true labels; empty
/// when nothing was accepted.
std::optional<double> impurity(std::span<const std::size_t> accepted, std::span<const std::size_t> pseudo_labels,
                               std::span<const int> true_labels);

}  // namespace trico

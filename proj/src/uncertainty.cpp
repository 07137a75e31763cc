#include "trico/uncertainty.hpp"

#include <algorithm>

#include "trico/error.hpp"

namespace trico {

ProbVector predictive_mean(std::span<const ProbVector> samples) {
    if (samples.empty()) throw InvalidInput("predictive_mean: no samples");
    const std::size_t c = samples.front().size();
    Vector mean(c, 0.0);
    for (const auto& s : samples) {
        if (s.size() != c) throw InvalidInput("predictive_mean: inconsistent class counts");
        for (std::size_t j = 0; j < c; ++j) mean[j] += s[j];
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    for (double& m : mean) m *= inv;
    return ProbVector(std::move(mean));
}

UncertaintyEstimate mutual_information(std::span<const ProbVector> samples) {
    ProbVector mean = predictive_mean(samples);
    double expected = 0.0;
    for (const auto& s : samples) expected += entropy_unchecked(s.values());
    expected /= static_cast<double>(samples.size());
    const double predictive = entropy_unchecked(mean.values());
    const std::size_t label = mean.argmax();
    return {std::move(mean), predictive, expected, std::max(0.0, predictive - expected), label};
}

namespace {

template <class Pred>
FilterResult filter_by(std::span<const UncertaintyEstimate> estimates, Pred keep) {
    FilterResult r;
    for (std::size_t i = 0; i < estimates.size(); ++i)
        if (keep(estimates[i])) r.accepted.push_back(i);
    r.mask_rate = estimates.empty()
                      ? 0.0
                      : 1.0 - static_cast<double>(r.accepted.size()) / static_cast<double>(estimates.size());
    return r;
}

}  // namespace

FilterResult mi_filter(std::span<const UncertaintyEstimate> estimates, double tau, FilterDirection direction) {
    if (direction == FilterDirection::above)
        return filter_by(estimates, [tau](const UncertaintyEstimate& e) { return e.mi > tau; });
    return filter_by(estimates, [tau](const UncertaintyEstimate& e) { return e.mi < tau; });
}

FilterResult confidence_filter(std::span<const UncertaintyEstimate> estimates, double tau) {
    return filter_by(estimates, [tau](const UncertaintyEstimate& e) { return e.mean.max() >= tau; });
}

std::optional<double> impurity(std::span<const std::size_t> accepted, std::span<const std::size_t> pseudo_labels,
                               std::span<const int> true_labels) {
    if (accepted.empty()) return std::nullopt;
    std::size_t wrong = 0;
    for (std::size_t i : accepted)
        if (static_cast<int>(pseudo_labels[i]) != true_labels[i]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(accepted.size());
}

}  // namespace trico

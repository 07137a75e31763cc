#pragma once

// Meta-learned teacher: (tau_MI, lambda_u, lambda_adv) from a raw 3-vector via
// sigmoids plus a rescale onto lambda_u + lambda_adv <= 1, updated with the
// gradient of the validation loss through one virtual student step.

#include <array>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "trico/numerics.hpp"
#include "trico/student.hpp"
#include "trico/uncertainty.hpp"

namespace trico {

struct StrategyTriple {
    double tau_mi = 0.05;
    double lambda_u = 0.5;
    double lambda_adv = 0.5;

    friend bool operator==(const StrategyTriple&, const StrategyTriple&) = default;
};

using RawStrategy = std::array<double, 3>;

StrategyTriple map_strategy(const RawStrategy& z) noexcept;
/// Row r = output (tau, lambda_u, lambda_adv), column c = z_c.
std::array<std::array<double, 3>, 3> map_jacobian(const RawStrategy& z) noexcept;

struct TeacherStrategy {
    RawStrategy z{};
    double lr_teacher = 0.01;
    double gate_temperature = 0.01;

    /// Inverse-maps an initial triple. Throws InvalidInput when a value leaves
    /// [0,1] or lambda_u + lambda_adv > 1.
    static TeacherStrategy from_values(StrategyTriple init, double lr_teacher, double gate_temperature);

    StrategyTriple mapped() const noexcept { return map_strategy(z); }
};

/// sigmoid((mi - tau) / temperature); the mirror image sigmoid((tau - mi) / temperature) for `below`.
double soft_gate(double mi, double tau, double temperature, FilterDirection direction = FilterDirection::above);
/// d soft_gate / d tau.
double soft_gate_dtau(double mi, double tau, double temperature, FilterDirection direction = FilterDirection::above);

/// Everything the virtual update of one student needs, frozen for the step.
struct ViewMetaBatch {
    DenseMatrix unlabeled;                // this view's unlabeled rows
    std::vector<int> pseudo_labels;       // argmax labels from the other view
    std::vector<double> source_mi;        // MI of the other view, drives the gate
    FilterDirection direction = FilterDirection::above;
    std::vector<DropoutMask> unsup_masks;
    DenseMatrix perturbed;                // x + delta for this view; 0 rows disables the adversarial term
    std::vector<DropoutMask> adv_masks;
    DenseMatrix validation;
    std::vector<int> validation_labels;
    // Optional inner gradients already computed at the current params and tau
    // (∇ L_unsup_soft, ∇ ∂L_unsup_soft/∂tau, ∇ L_adv). meta_grad uses them
    // instead of recomputing; unrolled_validation_loss ignores them.
    std::optional<StudentGrads> unsup_grads;
    std::optional<StudentGrads> tau_grads;
    std::optional<StudentGrads> adv_grads;
};

struct MetaGradient {
    RawStrategy dz{};
    std::array<double, 3> dtriple{};  // w.r.t. (tau, lambda_u, lambda_adv)
    double validation_loss = 0.0;     // at the virtually updated students
};

/// Gradient of Σ_v L_sup(val_v; θ_v') w.r.t. z with θ_v' = θ_v - η ∇(λ_u L_unsup_soft + λ_adv L_adv).
/// The inner gradients are taken at the fixed current θ_v; students are not modified.
/// Throws InvalidInput on an empty validation batch or mismatched sizes.
MetaGradient meta_grad(const TeacherStrategy& strategy, std::span<const StudentParams> students,
                       std::span<const ViewMetaBatch> batches, double eta_student);

/// The unrolled objective itself: forward-only evaluation of what meta_grad differentiates.
double unrolled_validation_loss(const RawStrategy& z, double gate_temperature, std::span<const StudentParams> students,
                                std::span<const ViewMetaBatch> batches, double eta_student);

/// z <- z - lr_teacher * g.
void teacher_step(TeacherStrategy& strategy, const RawStrategy& g);

class StrategyHistory {
public:
    explicit StrategyHistory(std::size_t window = 10);

    void push(const StrategyTriple& t);
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t window() const noexcept { return window_; }
    const std::deque<StrategyTriple>& entries() const noexcept { return entries_; }

private:
    std::size_t window_;
    std::deque<StrategyTriple> entries_;
};

/// Sum of the windowed population variances of the three mapped values.
/// Throws InsufficientHistory with fewer than 2 entries.
double stability_score(const StrategyHistory& history);

/// True iff the last `patience` scores exist and are all < eps_stop.
bool should_stop(std::span<const double> scores, double eps_stop, std::size_t patience);

}  // namespace trico

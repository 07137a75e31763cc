#pragma once

// Entropy-guided L∞ perturbations in embedding space. Ascent steps move along
// sign(∇) (FGSM when steps = 1 and step_size = epsilon); the fixed-point
// residual uses the raw entropy gradient.

#include <cstddef>
#include <span>
#include <vector>

#include "trico/numerics.hpp"
#include "trico/rng.hpp"
#include "trico/student.hpp"

namespace trico {

struct PerturbConfig {
    double epsilon = 1.0;
    double gamma = 0.0;         // weight on the MI term
    std::size_t steps = 1;
    double step_size = 1.0;
    std::size_t mi_passes = 5;  // dropout passes for the MI term when gamma > 0

    /// Throws InvalidInput on a non-positive budget/step or zero steps.
    void validate() const;
    static PerturbConfig fgsm(double epsilon) { return {epsilon, 0.0, 1, epsilon, 5}; }
    friend bool operator==(const PerturbConfig&, const PerturbConfig&) = default;
};

struct Perturbation {
    Vector delta;
    double objective_value = 0.0;
    double fixed_point_residual = 0.0;
    bool zero_gradient = false;       // gradient vanished at delta = 0
    std::vector<double> objective_trace;  // objective at every iterate, delta_0 first
};

struct PgdOptions {
    bool compute_residual = true;
    bool record_trace = false;
    bool compute_objective = true;  // when false objective_value stays 0
};

/// Coordinatewise clamp to [-epsilon, epsilon].
Vector project_linf(std::span<const double> delta, double epsilon);

/// H(softmax(f(x+delta))) in evaluation mode and its gradient w.r.t. delta.
double entropy_input_gradient(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                              std::span<double> grad);

/// MI over fixed masks at x+delta and its gradient w.r.t. delta.
double mi_input_gradient(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                         std::span<const DropoutMask> masks, std::span<double> grad);

/// H(eval forward at x+delta) + gamma * MI(mc_forward(x+delta, mi_passes, rng)).
double perturb_objective(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                         const PerturbConfig& cfg, RngStream& rng);

Perturbation pgd_perturb(const StudentParams& params, std::span<const double> x, const PerturbConfig& cfg,
                         RngStream& rng, PgdOptions options = {});

/// ‖delta - P_eps(delta + step_size * ∇_delta H)‖∞. Throws InvalidInput when delta is outside the ball.
double fixed_point_residual(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                            const PerturbConfig& cfg);

/// Sign-gradient ascent on the cross-entropy of `label`; used for robust accuracy.
Vector pgd_attack_cross_entropy(const StudentParams& params, std::span<const double> x, std::size_t label,
                                const PerturbConfig& cfg);

}  // namespace trico

#pragma once

// Central finite-difference checks of every analytic gradient in the library,
// over randomly drawn toy instances with a fixed seed.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace trico {

struct GradCheckResult {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0;  // worst ‖analytic - numeric‖∞ / max(‖analytic‖∞, ‖numeric‖∞, 1e-6)
    double tolerance = 0.0;

    bool passed() const noexcept { return instances > 0 && max_rel_error <= tolerance; }
};

/// Parameter gradients of the cross-entropy and entropy losses, with and without
/// dropout masks and per-row weights.
GradCheckResult check_student_gradients(std::size_t instances = 100, std::uint64_t seed = 1);
/// Input gradient of H(f(x+δ)) + γ·MI at fixed masks, γ ∈ {0, random}.
GradCheckResult check_generator_gradients(std::size_t instances = 100, std::uint64_t seed = 2);
/// dz of the unrolled validation loss against differences of unrolled_validation_loss.
GradCheckResult check_meta_gradients(std::size_t instances = 100, std::uint64_t seed = 3);

std::vector<GradCheckResult> run_gradcheck_suite(std::size_t instances = 100);

}  // namespace trico

#pragma once

// Equilibrium diagnostics on discretized strategy spaces. Payoffs are
// (R_T, R_S, R_G): the teacher and the generator maximize theirs, the students
// minimize R_S. A profile is an index triple into the three grids.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trico/data.hpp"
#include "trico/engine.hpp"

namespace trico {

struct Payoffs {
    double r_t = 0.0;  // validation accuracy of the ensemble
    double r_s = 0.0;  // lambda_u L_unsup + lambda_adv L_adv on the probe
    double r_g = 0.0;  // mean entropy at the perturbed probe points

    friend bool operator==(const Payoffs&, const Payoffs&) = default;
};

enum class Player { teacher = 0, students = 1, generator = 2 };
std::string_view player_name(Player p) noexcept;

struct Profile {
    std::size_t teacher = 0;
    std::size_t students = 0;
    std::size_t generator = 0;

    std::size_t& operator[](Player p) noexcept;
    std::size_t operator[](Player p) const noexcept;
    friend auto operator<=>(const Profile&, const Profile&) = default;
};

/// Finite three-player game with a lazily evaluated, memoized payoff function.
class FiniteGame {
public:
    using PayoffFn = std::function<Payoffs(const Profile&)>;

    /// Throws InvalidInput when a grid is empty.
    FiniteGame(std::array<std::size_t, 3> sizes, PayoffFn payoff);
    /// Payoff tables indexed [teacher][students][generator], flattened row-major.
    static FiniteGame from_table(std::array<std::size_t, 3> sizes, std::vector<Payoffs> table);

    std::size_t size(Player p) const noexcept { return sizes_[static_cast<std::size_t>(p)]; }
    /// Throws InvalidInput on an out-of-range profile.
    const Payoffs& payoffs(const Profile& p);
    std::size_t evaluations() const noexcept { return cache_.size(); }
    const std::map<Profile, Payoffs>& evaluated() const noexcept { return cache_; }

private:
    std::array<std::size_t, 3> sizes_;
    PayoffFn fn_;
    std::map<Profile, Payoffs> cache_;
};

/// The payoff a player optimizes: R_T, -R_S or R_G (larger is better for all).
double utility(Player p, const Payoffs& x) noexcept;

struct BestResponse {
    std::size_t index = 0;
    double payoff = 0.0;  // the player's own payoff (R_T, R_S or R_G) at the best point
};

/// Exhaustive scan over the player's grid with the others fixed. Ties go to the
/// incumbent, then to the lowest index.
BestResponse best_response(FiniteGame& game, Player player, const Profile& profile);

struct NashResidual {
    double teacher = 0.0;
    double students = 0.0;
    double generator = 0.0;

    double max() const noexcept;
    bool is_nash(double tol) const noexcept { return max() <= tol; }
};

/// Best unilateral improvement of each player, clamped at 0.
NashResidual nash_residual(FiniteGame& game, const Profile& profile);

struct BrDynamics {
    Profile profile;
    std::size_t rounds = 0;  // rounds run, including the final no-change round
    bool converged = false;
    std::vector<Profile> path;  // profile after each round
};

/// Rounds of teacher, then students, then generator best responses until a
/// round changes nothing or max_rounds is reached.
BrDynamics alternating_best_response(FiniteGame& game, Profile start, std::size_t max_rounds = 10);

/// Every pure profile whose Nash residual is <= tol, by exhaustive enumeration.
std::vector<Profile> enumerate_nash(FiniteGame& game, double tol = 0.0);

// ---------------------------------------------------------------------------
// The trained game.

struct GeneratorPoint {
    std::string name;
    bool enabled = true;  // false: delta = 0
    PerturbConfig config{};

    friend bool operator==(const GeneratorPoint&, const GeneratorPoint&) = default;
};

struct StrategyGrid {
    std::vector<StrategyTriple> teacher;
    std::vector<std::uint64_t> student_seeds;
    std::vector<GeneratorPoint> generator;

    /// Throws InvalidInput when a grid is empty or a teacher point leaves the constraint set.
    void validate() const;
};

/// tau in {0.01, 0.05, 0.1, 0.2}, lambda_u in {0, 0.25, 0.5, 0.75}, lambda_adv in {0, 0.25, 0.5}
/// with lambda_u + lambda_adv <= 1.
std::vector<StrategyTriple> default_teacher_grid();
/// Zero delta, FGSM, PGD-10 with step eps/4 and PGD-50 with step eps/10.
std::vector<GeneratorPoint> default_generator_grid(double epsilon);

/// Held-out rows for R_S and R_G: the first `size` unlabeled rows in index order.
std::vector<std::size_t> probe_rows(const TwoViewDataset& ds, std::size_t size);

/// Payoffs of fixed students under a teacher point and generator. Deterministic:
/// MC-dropout and perturbation seeds are derived from `seed` and the row id.
Payoffs compute_payoffs(const std::array<StudentParams, 2>& students, const StrategyTriple& teacher,
                        const GeneratorPoint& generator, const TrainConfig& cfg, const TwoViewDataset& ds,
                        std::span<const std::size_t> probe, std::uint64_t seed);

/// Students trained with the teacher frozen at `teacher` (eta_T = 0), the given
/// generator and seed, for cfg.epochs epochs.
std::array<StudentParams, 2> train_students(const TrainConfig& cfg, const TwoViewDataset& ds,
                                            const StrategyTriple& teacher, const GeneratorPoint& generator,
                                            std::uint64_t seed);

/// FiniteGame over the grid whose profile (i, j, k) trains students under
/// teacher i, seed j and generator k. `incumbent`, when given, supplies the
/// students of profile (0, 0, 0) instead of a retrain.
FiniteGame trained_game(const StrategyGrid& grid, const TrainConfig& cfg, const TwoViewDataset& ds,
                        std::span<const std::size_t> probe,
                        std::optional<std::array<StudentParams, 2>> incumbent = std::nullopt);

struct StackelbergResidual {
    double teacher = 0.0;    // ‖meta-gradient‖∞ at the final teacher
    double students = 0.0;   // ‖∇θ L_total‖∞ at the final students
    double generator = 0.0;  // mean PGD fixed-point residual on the probe

    double max() const noexcept;
};

/// First-order residuals of a trained state. The generator residual runs
/// `diagnostic` PGD on each probe row of both views.
StackelbergResidual stackelberg_residual(const TrainerState& state, const TrainConfig& cfg, const TwoViewDataset& ds,
                                         std::span<const std::size_t> probe, const PerturbConfig& diagnostic);

/// PGD-50 with step epsilon/10.
PerturbConfig diagnostic_pgd(double epsilon);

}  // namespace trico

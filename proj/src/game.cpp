#include "trico/game.hpp"

#include <algorithm>
#include <cmath>

#include "trico/error.hpp"
#include "trico/kernels.hpp"

namespace trico {

std::string_view player_name(Player p) noexcept {
    switch (p) {
    case Player::teacher: return "teacher";
    case Player::students: return "students";
    case Player::generator: return "generator";
    }
    return "?";
}

std::size_t& Profile::operator[](Player p) noexcept {
    return p == Player::teacher ? teacher : p == Player::students ? students : generator;
}

std::size_t Profile::operator[](Player p) const noexcept {
    return p == Player::teacher ? teacher : p == Player::students ? students : generator;
}

FiniteGame::FiniteGame(std::array<std::size_t, 3> sizes, PayoffFn payoff) : sizes_(sizes), fn_(std::move(payoff)) {
    for (std::size_t s : sizes_)
        if (s == 0) throw InvalidInput("FiniteGame: every grid needs at least one point");
    if (!fn_) throw InvalidInput("FiniteGame: missing payoff function");
}

FiniteGame FiniteGame::from_table(std::array<std::size_t, 3> sizes, std::vector<Payoffs> table) {
    if (table.size() != sizes[0] * sizes[1] * sizes[2]) throw InvalidInput("FiniteGame: table size mismatch");
    return FiniteGame(sizes, [sizes, table = std::move(table)](const Profile& p) {
        return table[(p.teacher * sizes[1] + p.students) * sizes[2] + p.generator];
    });
}

const Payoffs& FiniteGame::payoffs(const Profile& p) {
    if (p.teacher >= sizes_[0] || p.students >= sizes_[1] || p.generator >= sizes_[2])
        throw InvalidInput("FiniteGame: profile out of range");
    auto it = cache_.find(p);
    if (it == cache_.end()) it = cache_.emplace(p, fn_(p)).first;
    return it->second;
}

double utility(Player p, const Payoffs& x) noexcept {
    switch (p) {
    case Player::teacher: return x.r_t;
    case Player::students: return -x.r_s;
    case Player::generator: return x.r_g;
    }
    return 0.0;
}

namespace {
double own(Player p, const Payoffs& x) {
    return p == Player::teacher ? x.r_t : p == Player::students ? x.r_s : x.r_g;
}
}  // namespace

BestResponse best_response(FiniteGame& game, Player player, const Profile& profile) {
    Profile probe = profile;
    std::size_t best = profile[player];
    double best_u = utility(player, game.payoffs(profile));
    for (std::size_t i = 0; i < game.size(player); ++i) {
        if (i == profile[player]) continue;
        probe[player] = i;
        const double u = utility(player, game.payoffs(probe));
        if (u > best_u) {
            best_u = u;
            best = i;
        }
    }
    probe[player] = best;
    return {best, own(player, game.payoffs(probe))};
}

double NashResidual::max() const noexcept { return std::max({teacher, students, generator}); }

NashResidual nash_residual(FiniteGame& game, const Profile& profile) {
    const Payoffs& at = game.payoffs(profile);
    NashResidual r;
    for (Player p : {Player::teacher, Player::students, Player::generator}) {
        const double base = utility(p, at);
        double gain = 0.0;
        Profile dev = profile;
        for (std::size_t i = 0; i < game.size(p); ++i) {
            dev[p] = i;
            gain = std::max(gain, utility(p, game.payoffs(dev)) - base);
        }
        (p == Player::teacher ? r.teacher : p == Player::students ? r.students : r.generator) = gain;
    }
    return r;
}

BrDynamics alternating_best_response(FiniteGame& game, Profile start, std::size_t max_rounds) {
    BrDynamics out;
    out.profile = start;
    for (std::size_t round = 0; round < max_rounds; ++round) {
        const Profile before = out.profile;
        for (Player p : {Player::teacher, Player::students, Player::generator})
            out.profile[p] = best_response(game, p, out.profile).index;
        out.path.push_back(out.profile);
        out.rounds = round + 1;
        if (out.profile == before) {
            out.converged = true;
            break;
        }
    }
    return out;
}

std::vector<Profile> enumerate_nash(FiniteGame& game, double tol) {
    std::vector<Profile> out;
    Profile p;
    for (p.teacher = 0; p.teacher < game.size(Player::teacher); ++p.teacher)
        for (p.students = 0; p.students < game.size(Player::students); ++p.students)
            for (p.generator = 0; p.generator < game.size(Player::generator); ++p.generator)
                if (nash_residual(game, p).is_nash(tol)) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------

void StrategyGrid::validate() const {
    if (teacher.empty() || student_seeds.empty() || generator.empty()) throw InvalidInput("StrategyGrid: empty grid");
    for (const auto& t : teacher) {
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!unit(t.tau_mi) || !unit(t.lambda_u) || !unit(t.lambda_adv) || t.lambda_u + t.lambda_adv > 1.0)
            throw InvalidInput("StrategyGrid: teacher point violates the constraints");
    }
    for (const auto& g : generator)
        if (g.enabled) g.config.validate();
}

std::vector<StrategyTriple> default_teacher_grid() {
    std::vector<StrategyTriple> out;
    for (double tau : {0.01, 0.05, 0.1, 0.2})
        for (double lu : {0.0, 0.25, 0.5, 0.75})
            for (double la : {0.0, 0.25, 0.5})
                if (lu + la <= 1.0) out.push_back({tau, lu, la});
    return out;
}

std::vector<GeneratorPoint> default_generator_grid(double epsilon) {
    return {
        {"zero", false, PerturbConfig::fgsm(epsilon)},
        {"fgsm", true, PerturbConfig::fgsm(epsilon)},
        {"pgd10", true, {epsilon, 0.0, 10, epsilon / 4.0, 5}},
        {"pgd50", true, diagnostic_pgd(epsilon)},
    };
}

PerturbConfig diagnostic_pgd(double epsilon) { return {epsilon, 0.0, 50, epsilon / 10.0, 5}; }

std::vector<std::size_t> probe_rows(const TwoViewDataset& ds, std::size_t size) {
    auto rows = ds.indices_of(Split::unlabeled);
    if (rows.size() > size) rows.resize(size);
    return rows;
}

namespace {

constexpr std::uint64_t kTagProbeMc = 31, kTagProbeGen = 32;

FilterResult probe_filter(const TrainConfig& cfg, std::span<const UncertaintyEstimate> est, double tau) {
    switch (cfg.filter) {
    case FilterKind::mi: return mi_filter(est, tau, cfg.direction);
    case FilterKind::confidence: return confidence_filter(est, cfg.confidence_threshold);
    case FilterKind::none: break;
    }
    FilterResult all;
    for (std::size_t i = 0; i < est.size(); ++i) all.accepted.push_back(i);
    return all;
}

double eval_entropy(const StudentParams& f, std::span<const double> x) {
    const ForwardPass pass = forward(f, x, nullptr);
    Vector p(pass.logits.size());
    softmax_into(pass.logits, p);
    return entropy_unchecked(p);
}

}  // namespace

Payoffs compute_payoffs(const std::array<StudentParams, 2>& students, const StrategyTriple& teacher,
                        const GeneratorPoint& generator, const TrainConfig& cfg, const TwoViewDataset& ds,
                        std::span<const std::size_t> probe, std::uint64_t seed) {
    Payoffs out;
    const auto val = ds.indices_of(Split::validation);
    out.r_t = val.empty() ? 0.0 : evaluate(students, ds, val, nullptr).accuracy;
    if (probe.empty()) return out;

    const std::array<const DenseMatrix*, 2> views{&ds.view1, &ds.view2};
    std::array<std::vector<UncertaintyEstimate>, 2> est;
    std::array<FilterResult, 2> filt;
    for (std::size_t v = 0; v < 2; ++v) {
        for (std::size_t r : probe) {
            RngStream rng(derive_seed(seed, {kTagProbeMc, v, r}));
            est[v].push_back(mutual_information(mc_forward(students[v], views[v]->row(r), cfg.mc_passes, rng)));
        }
        filt[v] = probe_filter(cfg, est[v], teacher.tau_mi);
    }
    const auto targets = cross_view_targets(est, filt);

    const double n = static_cast<double>(probe.size());
    double r_s = 0.0, r_g = 0.0;
    PgdOptions opts;
    opts.compute_residual = false;
    opts.compute_objective = false;
    for (std::size_t v = 0; v < 2; ++v) {
        double unsup = 0.0, adv = 0.0;
        for (std::size_t i = 0; i < probe.size(); ++i) {
            const auto x = views[v]->row(probe[i]);
            if (targets[v].hard_weights[i] != 0.0) {
                const ForwardPass pass = forward(students[v], x, nullptr);
                unsup += cross_entropy(softmax(pass.logits), static_cast<std::size_t>(targets[v].labels[i]));
            }
            Vector xp(x.begin(), x.end());
            if (generator.enabled) {
                RngStream rng(derive_seed(seed, {kTagProbeGen, v, probe[i]}));
                const Perturbation p = pgd_perturb(students[v], x, generator.config, rng, opts);
                kernels::axpy(1.0, p.delta, xp);
            }
            adv += eval_entropy(students[v], xp);
        }
        r_s += teacher.lambda_u * unsup / n + teacher.lambda_adv * adv / n;
        r_g += adv / n;
    }
    out.r_s = r_s;
    out.r_g = r_g / 2.0;
    return out;
}

std::array<StudentParams, 2> train_students(const TrainConfig& cfg, const TwoViewDataset& ds,
                                            const StrategyTriple& teacher, const GeneratorPoint& generator,
                                            std::uint64_t seed) {
    TrainConfig c = cfg;
    c.teacher_init = teacher;
    c.eta_teacher = 0.0;
    c.generator_enabled = generator.enabled;
    if (generator.enabled) c.perturb = generator.config;
    c.seed = seed;
    c.stability_stop = false;
    c.convergence_stop = false;
    return run_training(c, ds).final_state.students;
}

FiniteGame trained_game(const StrategyGrid& grid, const TrainConfig& cfg, const TwoViewDataset& ds,
                        std::span<const std::size_t> probe, std::optional<std::array<StudentParams, 2>> incumbent) {
    grid.validate();
    std::vector<std::size_t> rows(probe.begin(), probe.end());
    return FiniteGame({grid.teacher.size(), grid.student_seeds.size(), grid.generator.size()},
                      [grid, cfg, &ds, rows, incumbent](const Profile& p) {
                          const auto& t = grid.teacher[p.teacher];
                          const auto& g = grid.generator[p.generator];
                          const std::uint64_t seed = grid.student_seeds[p.students];
                          const auto students = (incumbent && p == Profile{})
                                                    ? *incumbent
                                                    : train_students(cfg, ds, t, g, seed);
                          return compute_payoffs(students, t, g, cfg, ds, rows, cfg.seed);
                      });
}

double StackelbergResidual::max() const noexcept { return std::max({teacher, students, generator}); }

StackelbergResidual stackelberg_residual(const TrainerState& state, const TrainConfig& cfg, const TwoViewDataset& ds,
                                         std::span<const std::size_t> probe, const PerturbConfig& diagnostic) {
    StackelbergResidual r;
    const MetaGradient mg = full_meta_gradient(state, cfg, ds, cfg.eta_student);
    for (double d : mg.dz)
        if (std::isfinite(d)) r.teacher = std::max(r.teacher, std::abs(d));
    r.students = student_gradient_residual(state, cfg, ds);
    if (!probe.empty()) {
        const std::array<const DenseMatrix*, 2> views{&ds.view1, &ds.view2};
        double sum = 0.0;
        for (std::size_t v = 0; v < 2; ++v)
            for (std::size_t row : probe) {
                RngStream rng(derive_seed(state.view_seeds[v], {kTagProbeGen, row}));
                sum += pgd_perturb(state.students[v], views[v]->row(row), diagnostic, rng).fixed_point_residual;
            }
        r.generator = sum / static_cast<double>(2 * probe.size());
    }
    return r;
}

}  // namespace trico

#include "trico/report.hpp"

#include <cmath>

#include <json.hpp>

namespace trico {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json triple_json(const StrategyTriple& t) {
    return {{"tau_mi", t.tau_mi}, {"lambda_u", t.lambda_u}, {"lambda_adv", t.lambda_adv}};
}

json eval_json(const EvalMetrics& m) {
    return {{"n", m.n},
            {"accuracy", m.accuracy},
            {"pgd_robust_accuracy", opt(m.pgd_robust_accuracy)},
            {"mean_entropy", m.mean_entropy},
            {"agreement", m.agreement}};
}

json histogram_json(const BinHistogram& h) {
    json rates = json::array();
    for (const auto& r : h.mismatch_rate) rates.push_back(opt(r));
    return {{"counts", h.counts}, {"mismatch_rate", rates}};
}

json counters_json(const CostCounters& c) {
    return {{"student_forward", c.student_forward},     {"student_backward", c.student_backward},
            {"mi_forward", c.mi_forward},               {"perturb_gradient", c.perturb_gradient},
            {"perturb_forward", c.perturb_forward},     {"meta_backward", c.meta_backward},
            {"meta_forward", c.meta_forward},           {"validation_forward", c.validation_forward},
            {"validation_backward", c.validation_backward}};
}

json config_json(const RunConfig& cfg) {
    json out = json::object();
    for (const auto& [k, v] : config_echo(cfg)) out[k] = v;
    return out;
}

json profile_json(const Profile& p) { return json::array({p.teacher, p.students, p.generator}); }

json residual_json(const NashResidual& r) {
    return {{"teacher", r.teacher}, {"students", r.students}, {"generator", r.generator}, {"max", r.max()}};
}

}  // namespace

std::vector<std::size_t> evaluation_rows(const TwoViewDataset& ds) {
    auto rows = ds.indices_of(Split::test);
    return rows.empty() ? ds.indices_of(Split::validation) : rows;
}

SeedRun run_seed(const RunConfig& cfg, const TwoViewDataset& ds, std::uint64_t seed) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    SeedRun out{seed, run_training(t, ds), {}};
    out.calibration = bin_error_histogram(out.report.final_state.students, ds, evaluation_rows(ds), cfg.bins);
    return out;
}

MeanSd mean_sd(std::span<const double> values) {
    MeanSd r;
    if (values.empty()) return r;
    for (double v : values) r.mean += v;
    r.mean /= static_cast<double>(values.size());
    if (values.size() < 2) return r;
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return r;
}

std::string training_report_json(const RunConfig& cfg, std::span<const SeedRun> runs) {
    json seeds = json::array();
    for (const auto& run : runs) {
        const auto& r = run.report;
        const CostSummary cost = r.steps.empty() ? CostSummary{} : cost_counters(r.steps);
        json last = nullptr;
        if (!r.epochs.empty()) {
            const auto& e = r.epochs.back();
            last = {{"l_sup", e.l_sup},         {"l_unsup", e.l_unsup},   {"l_adv", e.l_adv},
                    {"l_total", e.l_total},     {"mask_rate", e.mask_rate}, {"impurity", opt(e.impurity)},
                    {"mean_entropy", e.mean_entropy}, {"agreement", e.agreement}, {"accuracy", e.accuracy}};
        }
        seeds.push_back({{"seed", run.seed},
                         {"stop_reason", r.stop_reason},
                         {"epochs_run", r.epochs.size()},
                         {"steps", r.steps.size()},
                         {"final", eval_json(r.final_eval)},
                         {"final_strategy", triple_json(r.final_state.teacher.mapped())},
                         {"last_epoch", last},
                         {"calibration", histogram_json(run.calibration)},
                         {"cost",
                          {{"per_step", counters_json(cost.per_step)},
                           {"units_per_step", cost.units_per_step},
                           {"student_units_per_step", cost.student_units_per_step},
                           {"ratio", cost.ratio}}}});
    }
    json out = {{"config", config_json(cfg)}, {"seeds", seeds}};
    if (!runs.empty()) {
        out["stop_reason"] = runs.front().report.stop_reason;
        out["final"] = eval_json(runs.front().report.final_eval);
    }
    if (cfg.multi_seed) {
        auto summarize = [&](auto get) {
            std::vector<double> v;
            for (const auto& run : runs)
                if (const std::optional<double> x = get(run.report)) v.push_back(*x);
            if (v.empty()) return json(nullptr);
            const MeanSd m = mean_sd(v);
            return json{{"mean", m.mean}, {"sd", m.sd}, {"n", v.size()}};
        };
        out["summary"] = {
            {"accuracy", summarize([](const TrainingReport& r) -> std::optional<double> { return r.final_eval.accuracy; })},
            {"pgd_robust_accuracy",
             summarize([](const TrainingReport& r) { return r.final_eval.pgd_robust_accuracy; })},
            {"mean_entropy",
             summarize([](const TrainingReport& r) -> std::optional<double> { return r.final_eval.mean_entropy; })},
            {"agreement",
             summarize([](const TrainingReport& r) -> std::optional<double> { return r.final_eval.agreement; })},
            {"mask_rate", summarize([](const TrainingReport& r) -> std::optional<double> {
                 if (r.epochs.empty()) return std::nullopt;
                 return r.epochs.back().mask_rate;
             })},
            {"impurity", summarize([](const TrainingReport& r) -> std::optional<double> {
                 if (r.epochs.empty()) return std::nullopt;
                 return r.epochs.back().impurity;
             })},
        };
    }
    return out.dump(2) + "\n";
}

std::string eval_report_json(const RunConfig& cfg, const EvalMetrics& metrics, const BinHistogram& calibration) {
    const json out = {{"config", config_json(cfg)}, {"final", eval_json(metrics)}, {"calibration", histogram_json(calibration)}};
    return out.dump(2) + "\n";
}

EquilibriumResult run_equilibrium(const RunConfig& cfg, const TwoViewDataset& ds, const SavedModel& model) {
    const TrainConfig& t = cfg.train;
    EquilibriumResult r;
    r.tolerance = cfg.game.tolerance;
    r.budget_epochs = cfg.game.budget_epochs;

    r.grid.teacher.push_back(model.teacher.mapped());
    for (const auto& p : default_teacher_grid()) r.grid.teacher.push_back(p);
    r.grid.student_seeds.push_back(t.seed);
    for (std::uint64_t s : cfg.game.student_seeds) r.grid.student_seeds.push_back(s);
    r.grid.generator.push_back(t.generator_enabled ? GeneratorPoint{"run", true, t.perturb}
                                                   : GeneratorPoint{"zero", false, t.perturb});
    for (const auto& g : default_generator_grid(t.perturb.epsilon)) r.grid.generator.push_back(g);

    const auto probe = probe_rows(ds, cfg.game.probe_size);
    r.probe_size = probe.size();
    TrainConfig budget = t;
    budget.epochs = cfg.game.budget_epochs;
    FiniteGame game = trained_game(r.grid, budget, ds, probe);
    r.incumbent_residual = nash_residual(game, r.incumbent);
    r.dynamics = alternating_best_response(game, r.incumbent);
    r.final_residual = nash_residual(game, r.dynamics.profile);
    r.points = game.evaluated();

    TrainerState state = init_trainer(t, model.students[0].shape(), model.students[1].shape(), 1);
    state.students = model.students;
    state.teacher = model.teacher;
    r.first_order = stackelberg_residual(state, t, ds, probe, diagnostic_pgd(t.perturb.epsilon));
    return r;
}

std::string equilibrium_report_json(const RunConfig& cfg, const EquilibriumResult& r) {
    json teacher = json::array(), generator = json::array(), points = json::array(), path = json::array();
    for (const auto& p : r.grid.teacher) teacher.push_back(triple_json(p));
    for (const auto& g : r.grid.generator)
        generator.push_back({{"name", g.name},
                             {"enabled", g.enabled},
                             {"epsilon", g.config.epsilon},
                             {"gamma", g.config.gamma},
                             {"steps", g.config.steps},
                             {"step_size", g.config.step_size}});
    for (const auto& [p, x] : r.points)
        points.push_back({{"profile", profile_json(p)}, {"r_t", x.r_t}, {"r_s", x.r_s}, {"r_g", x.r_g}});
    for (const auto& p : r.dynamics.path) path.push_back(profile_json(p));

    const json out = {
        {"config", config_json(cfg)},
        {"grids", {{"teacher", teacher}, {"student_seeds", r.grid.student_seeds}, {"generator", generator}}},
        {"budget_epochs", r.budget_epochs},
        {"probe_size", r.probe_size},
        {"tolerance", r.tolerance},
        {"points", points},
        {"incumbent", {{"profile", profile_json(r.incumbent)}, {"nash_residual", residual_json(r.incumbent_residual)}}},
        {"dynamics",
         {{"rounds", r.dynamics.rounds},
          {"converged", r.dynamics.converged},
          {"profile", profile_json(r.dynamics.profile)},
          {"path", path},
          {"nash_residual", residual_json(r.final_residual)}}},
        {"stackelberg_residual",
         {{"teacher", r.first_order.teacher},
          {"students", r.first_order.students},
          {"generator", r.first_order.generator},
          {"max", r.first_order.max()}}},
        {"verdict",
         {{"incumbent_grid_nash", r.incumbent_residual.is_nash(r.tolerance)},
          {"dynamics_converged", r.dynamics.converged},
          {"dynamics_grid_nash", r.final_residual.is_nash(r.tolerance)},
          {"first_order_stationary", r.first_order.max() <= r.tolerance}}},
    };
    return out.dump(2) + "\n";
}

}  // namespace trico

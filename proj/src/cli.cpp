#include "trico/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "trico/config.hpp"
#include "trico/error.hpp"
#include "trico/gradcheck.hpp"
#include "trico/model_io.hpp"
#include "trico/report.hpp"

namespace trico {
namespace fs = std::filesystem;

namespace {

using Overrides = std::vector<std::pair<std::string, std::string>>;

// `--section.key value` or `--section.key=value`
Overrides parse_overrides(const std::vector<std::string>& extras) {
    Overrides out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& a = extras[i];
        if (!a.starts_with("--") || a.find('.') == std::string::npos)
            throw ConfigError(0, "unexpected argument '" + a + "'");
        std::string key = a.substr(2);
        if (const auto eq = key.find('='); eq != std::string::npos) {
            out.emplace_back(key.substr(0, eq), key.substr(eq + 1));
            continue;
        }
        if (i + 1 >= extras.size()) throw ConfigError(0, "missing value for --" + key);
        out.emplace_back(key, extras[++i]);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("cannot write " + path.string());
    f << text;
}

struct Common {
    std::string config;
    std::string out;
};

RunConfig resolve(const Common& c, const Overrides& ov) {
    RunConfig cfg = c.config.empty() ? parse_config("", ov) : load_config(c.config, ov);
    if (!c.out.empty()) cfg.out = c.out;
    return cfg;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    const auto ds = build_dataset(cfg.data);
    const fs::path dir = cfg.out;
    fs::create_directories(dir);
    std::vector<std::uint64_t> seeds = cfg.multi_seed ? cfg.seeds : std::vector<std::uint64_t>{cfg.train.seed};
    std::vector<SeedRun> runs;
    for (std::uint64_t s : seeds) {
        runs.push_back(run_seed(cfg, ds, s));
        const auto& r = runs.back().report;
        out << "seed " << s << ": accuracy " << r.final_eval.accuracy;
        if (r.final_eval.pgd_robust_accuracy) out << ", robust " << *r.final_eval.pgd_robust_accuracy;
        out << ", stop " << r.stop_reason << ", epochs " << r.epochs.size() << "\n";
        if (cfg.multi_seed) {
            const std::string tag = "_seed" + std::to_string(s);
            write_curves_csv((dir / ("curves" + tag + ".csv")).string(), r);
            write_strategy_trace_csv((dir / ("strategy_trace" + tag + ".csv")).string(), r);
            write_model(dir / ("model" + tag + ".trcm"), r.final_state.students, r.final_state.teacher);
        }
    }
    const auto& first = runs.front().report;
    write_curves_csv((dir / "curves.csv").string(), first);
    write_strategy_trace_csv((dir / "strategy_trace.csv").string(), first);
    write_model(dir / "model.trcm", first.final_state.students, first.final_state.teacher);
    write_text(dir / "config.txt", config_text(cfg));
    write_text(dir / "report.json", training_report_json(cfg, runs));
    out << "wrote " << (dir / "report.json").string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_flag, std::ostream& out) {
    const fs::path model_path = !model_flag.empty()  ? fs::path(model_flag)
                                : !cfg.model.empty() ? fs::path(cfg.model)
                                                     : fs::path(cfg.out) / "model.trcm";
    const SavedModel model = read_model(model_path);
    const auto ds = build_dataset(cfg.data);
    const auto rows = evaluation_rows(ds);
    const PerturbConfig attack = attack_config(cfg.train);
    const EvalMetrics m = evaluate(model.students, ds, rows, &attack);
    const BinHistogram h = bin_error_histogram(model.students, ds, rows, cfg.bins);
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "eval_report.json", eval_report_json(cfg, m, h));
    out << "accuracy " << m.accuracy << ", robust " << m.pgd_robust_accuracy.value_or(0.0) << ", entropy "
        << m.mean_entropy << ", agreement " << m.agreement << " (n = " << m.n << ")\n";
    return 0;
}

int cmd_equilibrium(const Common& c, const std::string& run_dir, const Overrides& ov, std::ostream& out) {
    const fs::path dir = run_dir.empty() ? fs::path(c.out.empty() ? "out" : c.out) : fs::path(run_dir);
    RunConfig cfg = c.config.empty() ? load_config(dir / "config.txt", ov) : load_config(c.config, ov);
    cfg.out = c.out.empty() ? dir.string() : c.out;
    const SavedModel model = read_model(dir / "model.trcm");
    const auto ds = build_dataset(cfg.data);
    const EquilibriumResult r = run_equilibrium(cfg, ds, model);
    fs::create_directories(cfg.out);
    write_text(fs::path(cfg.out) / "equilibrium_report.json", equilibrium_report_json(cfg, r));
    out << "incumbent nash residual " << r.incumbent_residual.max() << "; best-response dynamics "
        << (r.dynamics.converged ? "converged" : "did not converge") << " in " << r.dynamics.rounds
        << " rounds, residual " << r.final_residual.max() << "\n"
        << "first-order residuals: teacher " << r.first_order.teacher << ", students " << r.first_order.students
        << ", generator " << r.first_order.generator << "\n"
        << "wrote " << (fs::path(cfg.out) / "equilibrium_report.json").string() << "\n";
    return 0;
}

int cmd_gradcheck(std::size_t instances, std::ostream& out) {
    bool ok = true;
    for (const auto& r : run_gradcheck_suite(instances)) {
        out << (r.passed() ? "PASS " : "FAIL ") << r.name << ": " << r.instances << " instances, max rel error "
            << r.max_rel_error << " (tol " << r.tolerance << ")\n";
        ok = ok && r.passed();
    }
    return ok ? 0 : 1;
}

int cmd_synth(const RunConfig& cfg, const std::string& format, std::ostream& out) {
    if (format != "binary" && format != "csv") throw ConfigError(0, "--format must be binary or csv");
    const TwoViewDataset ds = gen_synthetic_two_view(cfg.data.synthetic);
    const fs::path dir = cfg.out;
    fs::create_directories(dir);
    const bool csv = format == "csv";
    const std::string emb = csv ? ".csv" : ".trco", lab = csv ? ".csv" : ".trcl";
    const fs::path v1 = dir / ("view1" + emb), v2 = dir / ("view2" + emb), y = dir / ("labels" + lab),
                   yt = dir / ("true_labels" + lab);
    if (csv) {
        write_embedding_csv(v1, ds.view1);
        write_embedding_csv(v2, ds.view2);
        write_labels_csv(y, ds.labels);
        write_labels_csv(yt, ds.true_labels);
    } else {
        write_embedding_binary(v1, ds.view1);
        write_embedding_binary(v2, ds.view2);
        write_labels_binary(y, ds.labels);
        write_labels_binary(yt, ds.true_labels);
    }
    out << "wrote " << ds.size() << " rows to " << dir.string() << "\n"
        << "use: --data.source files --data.view1 " << v1.string() << " --data.view2 " << v2.string()
        << " --data.labels " << y.string() << " --data.true_labels " << yt.string() << "\n";
    return 0;
}

int cmd_cost(const RunConfig& cfg, std::ostream& out) {
    const auto ds = build_dataset(cfg.data);
    const TrainingReport r = run_training(cfg.train, ds);
    if (r.steps.empty()) throw InvalidInput("cost: the run recorded no steps");
    const CostSummary c = cost_counters(r.steps);
    const CostCounters& p = c.per_step;
    out << "steps " << c.steps << "\n"
        << "per step: student_forward " << p.student_forward << ", student_backward " << p.student_backward
        << ", mi_forward " << p.mi_forward << ", perturb_gradient " << p.perturb_gradient << ", perturb_forward "
        << p.perturb_forward << ", meta_backward " << p.meta_backward << ", meta_forward " << p.meta_forward
        << ", validation_forward " << p.validation_forward << ", validation_backward " << p.validation_backward << "\n"
        << "units per step " << c.units_per_step << " (student " << c.student_units_per_step << "), ratio "
        << c.ratio << "\n";
    return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-view co-training with an uncertainty-filtered teacher and an adversarial generator", "trico"};
    app.require_subcommand(1);
    Common common;
    std::string model_flag, run_dir, format = "binary";
    std::size_t instances = 100;

    auto add = [&](const char* name, const char* help) {
        CLI::App* s = app.add_subcommand(name, help);
        s->allow_extras();
        s->add_option("--config", common.config, "config file (section.key = value lines)");
        s->add_option("--out", common.out, "output directory (overrides run.out)");
        return s;
    };
    CLI::App* train = add("train", "train and write report.json, curves.csv, strategy_trace.csv, model.trcm");
    CLI::App* eval = add("eval", "evaluate a saved model on the test split");
    eval->add_option("--model", model_flag, "model file (default <out>/model.trcm)");
    CLI::App* equilibrium = add("equilibrium", "equilibrium diagnostics for a training run directory");
    equilibrium->add_option("--run", run_dir, "run directory with config.txt and model.trcm (default --out)");
    CLI::App* gradcheck = add("gradcheck", "finite-difference gradient checks");
    gradcheck->add_option("--instances", instances, "random instances per check")->check(CLI::PositiveNumber);
    CLI::App* synth = add("synth-data", "write the synthetic dataset as TRCO/TRCL (or CSV) files");
    synth->add_option("--format", format, "binary or csv");
    CLI::App* cost = add("cost", "per-step operation counts of a run");

    if (!args.empty() && !args[0].starts_with("-") && !app.get_subcommand_no_throw(args[0])) {
        err << "error: unknown subcommand '" << args[0] << "'\n" << app.help();
        return 2;
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const Overrides ov = parse_overrides(sub->remaining());
        if (sub == equilibrium) return cmd_equilibrium(common, run_dir, ov, out);
        const RunConfig cfg = resolve(common, ov);
        if (sub == train) return cmd_train(cfg, out);
        if (sub == eval) return cmd_eval(cfg, model_flag, out);
        if (sub == gradcheck) return cmd_gradcheck(instances, out);
        if (sub == synth) return cmd_synth(cfg, format, out);
        if (sub == cost) return cmd_cost(cfg, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int run_command(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_command(args, std::cout, std::cerr);
}

}  // namespace trico

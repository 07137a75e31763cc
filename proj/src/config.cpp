#include "trico/config.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string_view>

#include "trico/error.hpp"

namespace trico {

namespace {

// thrown by value parsers; turned into ConfigError with the line
struct BadValue {
    std::string what;
};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_int(std::string_view v) {
    T out{};
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw BadValue{"expected a non-negative integer, got '" + std::string(v) + "'"};
    return out;
}

double parse_real(std::string_view v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw BadValue{"expected a finite number, got '" + std::string(v) + "'"};
    return out;
}

bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw BadValue{"expected true/false, got '" + std::string(v) + "'"};
}

std::vector<std::uint64_t> parse_list(std::string_view v) {
    std::vector<std::uint64_t> out;
    while (true) {
        const auto comma = v.find(',');
        out.push_back(parse_int<std::uint64_t>(trim(v.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string fmt_list(const std::vector<std::uint64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

bool at_least(std::size_t x, std::size_t min) { return x >= min; }

void check(bool ok, const char* what) {
    if (!ok) throw BadValue{what};
}

struct Option {
    std::string key;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define TRICO_SIZE(KEY, FIELD, MIN)                                                                  \
    Option {                                                                                       \
        KEY, [](RunConfig& c, std::string_view v) {                                                \
            const auto x = parse_int<std::size_t>(v);                                              \
            check(at_least(x, MIN), "must be >= " #MIN);                                                 \
            c.FIELD = x;                                                                           \
        },                                                                                         \
            [](const RunConfig& c) { return std::to_string(c.FIELD); }                             \
    }
#define TRICO_REAL(KEY, FIELD, COND, MSG)                                                            \
    Option {                                                                                       \
        KEY, [](RunConfig& c, std::string_view v) {                                                \
            const double x = parse_real(v);                                                        \
            check(COND, MSG);                                                                      \
            c.FIELD = x;                                                                           \
        },                                                                                         \
            [](const RunConfig& c) { return fmt(c.FIELD); }                                        \
    }
#define TRICO_BOOL(KEY, FIELD)                                                                       \
    Option {                                                                                       \
        KEY, [](RunConfig& c, std::string_view v) { c.FIELD = parse_bool(v); },                   \
            [](const RunConfig& c) { return fmt(c.FIELD); }                                        \
    }
#define TRICO_U64(KEY, FIELD)                                                                        \
    Option {                                                                                       \
        KEY, [](RunConfig& c, std::string_view v) { c.FIELD = parse_int<std::uint64_t>(v); },     \
            [](const RunConfig& c) { return std::to_string(c.FIELD); }                             \
    }
#define TRICO_STR(KEY, FIELD)                                                                        \
    Option {                                                                                       \
        KEY, [](RunConfig& c, std::string_view v) { c.FIELD = std::string(v); },                  \
            [](const RunConfig& c) { return c.FIELD; }                                             \
    }

const std::vector<Option>& options() {
    static const std::vector<Option> opts = {
        TRICO_SIZE("train.epochs", train.epochs, 0),
        TRICO_SIZE("train.steps_per_epoch", train.steps_per_epoch, 0),
        TRICO_SIZE("train.hidden", train.hidden, 1),
        TRICO_REAL("train.dropout", train.dropout, x >= 0.0 && x < 1.0, "must be in [0,1)"),
        TRICO_REAL("train.eta", train.eta_student, x > 0.0, "must be > 0"),
        TRICO_REAL("train.momentum", train.momentum, x >= 0.0 && x < 1.0, "must be in [0,1)"),
        Option{"train.norm_bound",
               [](RunConfig& c, std::string_view v) {
                   const double x = parse_real(v);
                   check(x >= 0.0, "must be >= 0 (0 disables the projection)");
                   c.train.norm_bound = x > 0.0 ? std::optional<double>(x) : std::nullopt;
               },
               [](const RunConfig& c) { return fmt(c.train.norm_bound.value_or(0.0)); }},
        TRICO_SIZE("train.batch", train.labeled_batch, 1),
        TRICO_SIZE("train.mu", train.unlabeled_ratio, 1),
        TRICO_SIZE("train.k", train.mc_passes, 1),
        TRICO_BOOL("train.class_balanced", train.class_balanced),
        TRICO_U64("train.seed", train.seed),
        TRICO_BOOL("train.mirror_views", train.mirror_views),

        Option{"filter.kind",
               [](RunConfig& c, std::string_view v) {
                   if (v == "mi") c.train.filter = FilterKind::mi;
                   else if (v == "confidence") c.train.filter = FilterKind::confidence;
                   else if (v == "none") c.train.filter = FilterKind::none;
                   else throw BadValue{"expected mi|confidence|none"};
               },
               [](const RunConfig& c) { return std::string(filter_kind_name(c.train.filter)); }},
        Option{"filter.direction",
               [](RunConfig& c, std::string_view v) {
                   if (v == "above") c.train.direction = FilterDirection::above;
                   else if (v == "below") c.train.direction = FilterDirection::below;
                   else throw BadValue{"expected above|below"};
               },
               [](const RunConfig& c) {
                   return std::string(c.train.direction == FilterDirection::above ? "above" : "below");
               }},
        TRICO_REAL("filter.confidence", train.confidence_threshold, x >= 0.0 && x <= 1.0, "must be in [0,1]"),

        TRICO_BOOL("generator.enabled", train.generator_enabled),
        TRICO_REAL("generator.epsilon", train.perturb.epsilon, x > 0.0, "must be > 0"),
        TRICO_REAL("generator.gamma", train.perturb.gamma, x >= 0.0, "must be >= 0"),
        TRICO_SIZE("generator.steps", train.perturb.steps, 1),
        TRICO_REAL("generator.step_size", train.perturb.step_size, x > 0.0, "must be > 0"),
        TRICO_SIZE("generator.mi_passes", train.perturb.mi_passes, 1),

        TRICO_REAL("teacher.tau", train.teacher_init.tau_mi, x >= 0.0 && x <= 1.0, "must be in [0,1]"),
        TRICO_REAL("teacher.lambda_u", train.teacher_init.lambda_u, x >= 0.0 && x <= 1.0, "must be in [0,1]"),
        TRICO_REAL("teacher.lambda_adv", train.teacher_init.lambda_adv, x >= 0.0 && x <= 1.0, "must be in [0,1]"),
        TRICO_REAL("teacher.eta_t", train.eta_teacher, x >= 0.0, "must be >= 0"),
        TRICO_REAL("teacher.temperature", train.gate_temperature, x > 0.0, "must be > 0"),
        TRICO_SIZE("teacher.every", train.teacher_every, 1),
        Option{"teacher.ordering",
               [](RunConfig& c, std::string_view v) {
                   if (v == "before_step") c.train.meta_ordering = MetaOrdering::before_step;
                   else if (v == "after_step") c.train.meta_ordering = MetaOrdering::after_step;
                   else throw BadValue{"expected before_step|after_step"};
               },
               [](const RunConfig& c) { return std::string(meta_ordering_name(c.train.meta_ordering)); }},

        TRICO_BOOL("stop.stability", train.stability_stop),
        TRICO_REAL("stop.eps", train.eps_stop, x > 0.0, "must be > 0"),
        TRICO_SIZE("stop.patience", train.patience, 1),
        TRICO_SIZE("stop.window", train.stability_window, 2),
        TRICO_BOOL("stop.convergence", train.convergence_stop),
        TRICO_REAL("stop.delta_h", train.delta_h, x > 0.0, "must be > 0"),
        TRICO_REAL("stop.delta_a", train.delta_a, x > 0.0, "must be > 0"),
        TRICO_SIZE("stop.convergence_window", train.convergence_window, 2),

        TRICO_SIZE("eval.attack_steps", train.attack_steps, 1),
        TRICO_REAL("eval.attack_step_fraction", train.attack_step_fraction, x > 0.0, "must be > 0"),
        TRICO_BOOL("eval.robust_each_epoch", train.robust_eval_each_epoch),
        TRICO_SIZE("eval.bins", bins, 2),
        TRICO_STR("eval.model", model),

        Option{"data.source",
               [](RunConfig& c, std::string_view v) {
                   if (v == "synthetic") c.data.source = DataSource::synthetic;
                   else if (v == "files") c.data.source = DataSource::files;
                   else throw BadValue{"expected synthetic|files"};
               },
               [](const RunConfig& c) {
                   return std::string(c.data.source == DataSource::synthetic ? "synthetic" : "files");
               }},
        TRICO_SIZE("data.n", data.synthetic.n, 1),
        TRICO_SIZE("data.classes", data.synthetic.classes, 2),
        TRICO_SIZE("data.d1", data.synthetic.d1, 1),
        TRICO_SIZE("data.d2", data.synthetic.d2, 1),
        TRICO_REAL("data.view_noise", data.synthetic.view_noise, x >= 0.0, "must be >= 0"),
        TRICO_REAL("data.label_noise", data.synthetic.label_noise, x >= 0.0 && x <= 1.0, "must be in [0,1]"),
        TRICO_U64("data.seed", data.synthetic.seed),
        TRICO_STR("data.view1", data.view1),
        TRICO_STR("data.view2", data.view2),
        TRICO_STR("data.labels", data.labels),
        TRICO_STR("data.true_labels", data.true_labels),
        TRICO_SIZE("data.labeled", data.labeled, 1),
        TRICO_REAL("data.validation_fraction", data.validation_fraction, x > 0.0 && x < 1.0, "must be in (0,1)"),
        TRICO_SIZE("data.test", data.test, 0),
        TRICO_U64("data.split_seed", data.split_seed),

        TRICO_SIZE("game.budget_epochs", game.budget_epochs, 1),
        TRICO_SIZE("game.probe_size", game.probe_size, 1),
        TRICO_REAL("game.tolerance", game.tolerance, x > 0.0, "must be > 0"),
        Option{"game.student_seeds", [](RunConfig& c, std::string_view v) { c.game.student_seeds = parse_list(v); },
               [](const RunConfig& c) { return fmt_list(c.game.student_seeds); }},

        TRICO_STR("run.out", out),
        TRICO_BOOL("run.multi_seed", multi_seed),
        Option{"run.seeds",
               [](RunConfig& c, std::string_view v) {
                   c.seeds = parse_list(v);
               },
               [](const RunConfig& c) { return fmt_list(c.seeds); }},
    };
    return opts;
}

#undef TRICO_SIZE
#undef TRICO_REAL
#undef TRICO_BOOL
#undef TRICO_U64
#undef TRICO_STR

const Option* find_option(std::string_view key) {
    for (const auto& o : options())
        if (o.key == key) return &o;
    return nullptr;
}

void apply(RunConfig& cfg, std::map<std::string, std::size_t>& lines, std::string_view key, std::string_view value,
           std::size_t line) {
    const Option* o = find_option(key);
    if (!o) throw ConfigError(line, "unknown key '" + std::string(key) + "'");
    try {
        o->set(cfg, value);
    } catch (const BadValue& e) {
        throw ConfigError(line, std::string(key) + ": " + e.what);
    }
    lines[std::string(key)] = line;
}

// cross-key constraints, cited at the line that set the later of the keys involved
void check_cross(const RunConfig& cfg, const std::map<std::string, std::size_t>& lines) {
    auto at = [&](std::initializer_list<const char*> keys) {
        std::size_t l = 0;
        for (const char* k : keys) {
            const auto it = lines.find(k);
            if (it != lines.end()) l = std::max(l, it->second);
        }
        return l;
    };
    const auto& t = cfg.train.teacher_init;
    if (t.lambda_u + t.lambda_adv > 1.0)
        throw ConfigError(at({"teacher.lambda_u", "teacher.lambda_adv"}), "teacher.lambda_u + teacher.lambda_adv must be <= 1");
    if (cfg.train.filter == FilterKind::mi && cfg.train.mc_passes < 2)
        throw ConfigError(at({"train.k", "filter.kind"}), "train.k must be >= 2 with MI filtering");
    if (cfg.data.source == DataSource::files && (cfg.data.view1.empty() || cfg.data.view2.empty() || cfg.data.labels.empty()))
        throw ConfigError(at({"data.source", "data.view1", "data.view2", "data.labels"}),
                          "data.source = files needs data.view1, data.view2 and data.labels");
    if (cfg.data.source == DataSource::synthetic && cfg.data.test + cfg.data.labeled >= cfg.data.synthetic.n)
        throw ConfigError(at({"data.n", "data.test", "data.labeled"}), "data.test + data.labeled must be < data.n");
    if (cfg.seeds.empty()) throw ConfigError(at({"run.seeds"}), "run.seeds must not be empty");
    if (cfg.game.student_seeds.empty()) throw ConfigError(at({"game.student_seeds"}), "game.student_seeds must not be empty");
    try {
        cfg.train.validate();
    } catch (const InvalidInput& e) {
        throw ConfigError(0, e.what());
    }
}

}  // namespace

void RunConfig::validate() const { check_cross(*this, {}); }

RunConfig parse_config(const std::string& text, const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg;
    std::map<std::string, std::size_t> lines;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(line_no, "expected 'section.key = value'");
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.find('.') == std::string_view::npos || value.empty())
            throw ConfigError(line_no, "expected 'section.key = value'");
        apply(cfg, lines, key, value, line_no);
    }
    for (const auto& [k, v] : overrides) apply(cfg, lines, k, trim(v), 0);
    check_cross(cfg, lines);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError(0, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& o : options()) out.emplace_back(o.key, o.get(cfg));
    return out;
}

std::string config_text(const RunConfig& cfg) {
    std::string s;
    for (const auto& [k, v] : config_echo(cfg))
        if (!v.empty()) s += k + " = " + v + "\n";
    return s;
}

TwoViewDataset build_dataset(const DataConfig& data) {
    TwoViewDataset raw;
    if (data.source == DataSource::synthetic) {
        raw = gen_synthetic_two_view(data.synthetic);
    } else {
        raw = load_embedding_file(data.view1, data.view2, data.labels);
        if (!data.true_labels.empty()) {
            raw.true_labels = data.true_labels.ends_with(".csv") ? read_labels_csv(data.true_labels)
                                                                 : read_labels_binary(data.true_labels);
            if (raw.true_labels.size() != raw.size()) throw InvalidInput("true labels: row count mismatch");
        }
    }
    const std::size_t n = raw.size();
    if (data.test + data.labeled >= n) throw InvalidInput("dataset too small for the requested labeled/test rows");
    const double test_fraction = static_cast<double>(data.test) / static_cast<double>(n);
    const double labeled_fraction = static_cast<double>(data.labeled) / static_cast<double>(n - data.test);
    return make_splits(raw, labeled_fraction, data.validation_fraction, data.split_seed, test_fraction);
}

}  // namespace trico

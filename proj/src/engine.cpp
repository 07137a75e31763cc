#include "trico/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "trico/error.hpp"
#include "trico/kernels.hpp"

namespace trico {

namespace {

// RNG path tags
constexpr std::uint64_t kTagInit = 1, kTagView = 2, kTagBatch = 3;
constexpr std::uint64_t kTagMc = 11, kTagGen = 12, kTagSup = 13, kTagUnsup = 14, kTagAdv = 15;

void add_scaled(StudentGrads& dst, const StudentGrads& src, double a) {
    kernels::axpy(a, src.w1.flat(), dst.w1.flat());
    kernels::axpy(a, src.b1, dst.b1);
    kernels::axpy(a, src.w2.flat(), dst.w2.flat());
    kernels::axpy(a, src.b2, dst.b2);
}

double grads_inf_norm(const StudentGrads& g) {
    double m = 0.0;
    for_each_tensor(g, [&](std::span<const double> t) { m = std::max(m, norm_inf(t)); });
    return m;
}

FilterResult apply_filter(const TrainConfig& cfg, std::span<const UncertaintyEstimate> est, double tau) {
    switch (cfg.filter) {
    case FilterKind::mi:
        return mi_filter(est, tau, cfg.direction);
    case FilterKind::confidence:
        return confidence_filter(est, cfg.confidence_threshold);
    case FilterKind::none: {
        FilterResult all;
        all.accepted.resize(est.size());
        for (std::size_t i = 0; i < est.size(); ++i) all.accepted[i] = i;
        return all;
    }
    }
    return {};
}

std::optional<double> known_impurity(const std::vector<std::size_t>& accepted, std::span<const UncertaintyEstimate> est,
                                     std::span<const int> truth) {
    std::vector<std::size_t> idx, labels(est.size());
    for (std::size_t i = 0; i < est.size(); ++i) labels[i] = est[i].pseudo_label;
    for (std::size_t i : accepted)
        if (truth[i] != kUnlabeled) idx.push_back(i);
    return impurity(idx, labels, truth);
}

std::vector<DropoutMask> draw_masks(std::uint64_t seed, std::uint64_t tag, std::size_t step,
                                    std::span<const std::size_t> ids, std::size_t hidden, double rate) {
    std::vector<DropoutMask> masks;
    masks.reserve(ids.size());
    for (std::size_t id : ids) masks.push_back(DropoutMask::draw(derive_seed(seed, {tag, step, id}), hidden, rate));
    return masks;
}

}  // namespace

std::string_view filter_kind_name(FilterKind k) noexcept {
    switch (k) {
    case FilterKind::mi: return "mi";
    case FilterKind::confidence: return "confidence";
    case FilterKind::none: return "none";
    }
    return "?";
}

std::string_view meta_ordering_name(MetaOrdering m) noexcept {
    return m == MetaOrdering::before_step ? "before_step" : "after_step";
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidInput("train config: " + what); };
    if (hidden == 0) fail("hidden must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0,1)");
    if (!(eta_student > 0.0)) fail("eta_student must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must be in [0,1)");
    if (norm_bound && !(*norm_bound > 0.0)) fail("norm_bound must be > 0");
    if (labeled_batch == 0) fail("labeled batch must be >= 1");
    if (unlabeled_ratio == 0) fail("mu must be >= 1");
    if (mc_passes == 0) fail("K must be >= 1");
    if (filter == FilterKind::mi && mc_passes < 2) fail("K must be >= 2 with MI filtering");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) fail("confidence threshold must be in [0,1]");
    perturb.validate();
    if (!(eta_teacher >= 0.0)) fail("eta_teacher must be >= 0");
    if (!(gate_temperature > 0.0)) fail("gate temperature must be > 0");
    if (teacher_every == 0) fail("teacher update period must be >= 1");
    if (!(eps_stop > 0.0)) fail("eps_stop must be > 0");
    if (patience == 0) fail("patience must be >= 1");
    if (stability_window < 2) fail("stability window must be >= 2");
    if (!(delta_h > 0.0) || !(delta_a > 0.0)) fail("convergence thresholds must be > 0");
    if (convergence_window < 2) fail("convergence window must be >= 2");
    if (attack_steps == 0) fail("attack steps must be >= 1");
    if (!(attack_step_fraction > 0.0)) fail("attack step fraction must be > 0");
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(teacher_init.tau_mi) || !unit(teacher_init.lambda_u) || !unit(teacher_init.lambda_adv))
        fail("teacher init values must be in [0,1]");
    if (teacher_init.lambda_u + teacher_init.lambda_adv > 1.0) fail("lambda_u + lambda_adv must be <= 1");
}

bool TrainConfig::supervised_only() const noexcept {
    return teacher_init.lambda_u == 0.0 && teacher_init.lambda_adv == 0.0 && eta_teacher == 0.0;
}

double CostCounters::units() const noexcept {
    return student_units() + static_cast<double>(mi_forward) + 2.0 * static_cast<double>(perturb_gradient) +
           static_cast<double>(perturb_forward) + 2.0 * static_cast<double>(meta_backward) +
           static_cast<double>(meta_forward) + static_cast<double>(validation_forward) +
           2.0 * static_cast<double>(validation_backward);
}

double CostCounters::student_units() const noexcept {
    return static_cast<double>(student_forward) + 2.0 * static_cast<double>(student_backward);
}

CostCounters& CostCounters::operator+=(const CostCounters& o) noexcept {
    student_forward += o.student_forward;
    student_backward += o.student_backward;
    mi_forward += o.mi_forward;
    perturb_gradient += o.perturb_gradient;
    perturb_forward += o.perturb_forward;
    meta_backward += o.meta_backward;
    meta_forward += o.meta_forward;
    validation_forward += o.validation_forward;
    validation_backward += o.validation_backward;
    return *this;
}

TrainerState init_trainer(const TrainConfig& cfg, StudentShape shape1, StudentShape shape2, std::size_t total_steps) {
    cfg.validate();
    if (cfg.mirror_views && !(shape1 == shape2)) throw InvalidInput("init_trainer: mirrored views need equal shapes");
    TrainerState st;
    const std::array<StudentShape, 2> shapes{shape1, shape2};
    for (std::size_t v = 0; v < 2; ++v) {
        const std::size_t src = cfg.mirror_views ? 0 : v;
        st.students[v] = StudentParams::init(shapes[v], cfg.dropout, derive_seed(cfg.seed, {kTagInit, src}));
        st.optimizers[v] = OptimizerState::make(shapes[v], cfg.eta_student, cfg.momentum, std::max<std::size_t>(1, total_steps));
        st.optimizers[v].norm_bound = cfg.norm_bound;
        st.view_seeds[v] = derive_seed(cfg.seed, {kTagView, src});
    }
    st.teacher = TeacherStrategy::from_values(cfg.teacher_init, cfg.eta_teacher, cfg.gate_temperature);
    return st;
}

StepData gather_step(const TwoViewDataset& ds, const Batch& batch) {
    StepData d;
    d.labeled = {ds.view1.gather_rows(batch.labeled), ds.view2.gather_rows(batch.labeled)};
    for (std::size_t r : batch.labeled) d.labels.push_back(ds.labels[r]);
    d.unlabeled = {ds.view1.gather_rows(batch.unlabeled), ds.view2.gather_rows(batch.unlabeled)};
    d.unlabeled_rows = batch.unlabeled;
    for (std::size_t r : batch.unlabeled) d.unlabeled_truth.push_back(ds.true_labels[r]);
    if (batch.validation) {
        d.validation = {ds.view1.gather_rows(*batch.validation), ds.view2.gather_rows(*batch.validation)};
        for (std::size_t r : *batch.validation) d.validation_labels.push_back(ds.labels[r]);
    }
    d.epoch = batch.epoch;
    return d;
}

std::array<UnsupTargets, 2> cross_view_targets(const std::array<std::vector<UncertaintyEstimate>, 2>& estimates,
                                               const std::array<FilterResult, 2>& filters) {
    if (estimates[0].size() != estimates[1].size()) throw InvalidInput("cross_view_targets: views disagree in length");
    std::array<UnsupTargets, 2> out;
    for (std::size_t v = 0; v < 2; ++v) {
        const std::size_t src = 1 - v;
        const auto& est = estimates[src];
        UnsupTargets& t = out[v];
        t.labels.resize(est.size());
        t.source_mi.resize(est.size());
        t.hard_weights.assign(est.size(), 0.0);
        for (std::size_t i = 0; i < est.size(); ++i) {
            t.labels[i] = static_cast<int>(est[i].pseudo_label);
            t.source_mi[i] = est[i].mi;
        }
        for (std::size_t i : filters[src].accepted) t.hard_weights.at(i) = 1.0;
    }
    return out;
}

StepReport train_step(TrainerState& st, const TrainConfig& cfg, const StepData& d) {
    const std::size_t t = st.step;
    const StrategyTriple s = st.teacher.mapped();
    const bool teacher_active = cfg.eta_teacher > 0.0 && t % cfg.teacher_every == 0;
    const std::size_t nu = d.unlabeled_rows.size();
    const bool use_unsup = (s.lambda_u > 0.0 || teacher_active) && nu > 0;
    const bool use_adv = cfg.generator_enabled && (s.lambda_adv > 0.0 || teacher_active) && nu > 0;
    const bool meta_shared = teacher_active && cfg.meta_ordering == MetaOrdering::before_step;
    if (teacher_active && d.validation_labels.empty()) throw InvalidInput("train_step: teacher needs a validation batch");

    StepReport rep;
    rep.step = t;
    rep.epoch = d.epoch;
    rep.strategy = s;
    CostCounters& cost = rep.cost;

    // MC-dropout estimates and the filter, per view
    std::array<std::vector<UncertaintyEstimate>, 2> est;
    std::array<FilterResult, 2> filt;
    if (use_unsup) {
        for (std::size_t v = 0; v < 2; ++v) {
            est[v].reserve(nu);
            double mi_sum = 0.0;
            for (std::size_t i = 0; i < nu; ++i) {
                RngStream rng(derive_seed(st.view_seeds[v], {kTagMc, t, d.unlabeled_rows[i]}));
                const auto samples = mc_forward(st.students[v], d.unlabeled[v].row(i), cfg.mc_passes, rng);
                est[v].push_back(mutual_information(samples));
                mi_sum += est[v].back().mi;
            }
            cost.mi_forward += cfg.mc_passes * nu;
            filt[v] = apply_filter(cfg, est[v], s.tau_mi);
            ViewStepStats& vs = rep.views[v];
            vs.candidates = nu;
            vs.accepted = filt[v].accepted.size();
            vs.mask_rate = filt[v].mask_rate;
            vs.impurity = known_impurity(filt[v].accepted, est[v], d.unlabeled_truth);
            vs.no_pseudo_labels = vs.accepted == 0;
            vs.mean_mi = mi_sum / static_cast<double>(nu);
        }
    }
    const auto targets = use_unsup ? cross_view_targets(est, filt) : std::array<UnsupTargets, 2>{};

    // adversarial points x + delta
    std::array<DenseMatrix, 2> perturbed;
    if (use_adv) {
        PgdOptions opts;
        opts.compute_residual = false;
        opts.compute_objective = false;
        for (std::size_t v = 0; v < 2; ++v) {
            perturbed[v] = d.unlabeled[v];
            for (std::size_t i = 0; i < nu; ++i) {
                RngStream rng(derive_seed(st.view_seeds[v], {kTagGen, t, d.unlabeled_rows[i]}));
                const Perturbation p = pgd_perturb(st.students[v], d.unlabeled[v].row(i), cfg.perturb, rng, opts);
                kernels::axpy(1.0, p.delta, perturbed[v].row(i));
            }
            const std::size_t per_step = 1 + (cfg.perturb.gamma > 0.0 ? cfg.perturb.mi_passes : 0);
            cost.perturb_gradient += cfg.perturb.steps * per_step * nu;
        }
    }

    std::array<StudentGrads, 2> total;
    std::array<ViewMetaBatch, 2> meta;
    std::array<double, 2> lr{};
    for (std::size_t v = 0; v < 2; ++v) {
        StudentParams& f = st.students[v];
        const StudentShape shape = f.shape();
        const std::size_t hidden = shape.hidden;
        lr[v] = st.optimizers[v].learning_rate();

        std::vector<std::size_t> slots(d.labels.size());
        for (std::size_t j = 0; j < slots.size(); ++j) slots[j] = j;
        const auto sup_masks = draw_masks(st.view_seeds[v], kTagSup, t, slots, hidden, f.dropout_rate);
        LossAndGrads sup = loss_and_grads(f, d.labeled[v], d.labels, LossKind::cross_entropy, sup_masks);
        cost.student_forward += d.labels.size();
        cost.student_backward += d.labels.size();
        rep.l_sup += sup.loss;
        total[v] = std::move(sup.grads);

        std::vector<DropoutMask> unsup_masks;
        StudentGrads g_hard = StudentGrads::zeros(shape);
        StudentGrads g_soft = StudentGrads::zeros(shape), g_tau = StudentGrads::zeros(shape);
        if (use_unsup) {
            unsup_masks = draw_masks(st.view_seeds[v], kTagUnsup, t, d.unlabeled_rows, hidden, f.dropout_rate);
            const UnsupTargets& tg = targets[v];
            const double inv_n = 1.0 / static_cast<double>(nu);
            ForwardPass pass;
            Vector probs(shape.classes), dlogits(shape.classes);
            double l_unsup = 0.0;
            for (std::size_t i = 0; i < nu; ++i) {
                const double h = tg.hard_weights[i];
                double w = 0.0, wt = 0.0;
                if (meta_shared) {
                    w = soft_gate(tg.source_mi[i], s.tau_mi, cfg.gate_temperature, cfg.direction);
                    wt = soft_gate_dtau(tg.source_mi[i], s.tau_mi, cfg.gate_temperature, cfg.direction);
                }
                if (h == 0.0 && w == 0.0 && wt == 0.0) continue;
                forward_into(f, d.unlabeled[v].row(i), &unsup_masks[i], pass);
                ++cost.student_forward;
                softmax_into(pass.logits, probs);
                const double l = cross_entropy_logit_grad(probs, static_cast<std::size_t>(tg.labels[i]), dlogits);
                if (h != 0.0) {
                    l_unsup += h * l * inv_n;
                    backward(f, pass, dlogits, h * inv_n, &g_hard, {});
                    ++cost.student_backward;
                }
                if (w != 0.0) {
                    backward(f, pass, dlogits, w * inv_n, &g_soft, {});
                    ++cost.meta_backward;
                }
                if (wt != 0.0) {
                    backward(f, pass, dlogits, wt * inv_n, &g_tau, {});
                    ++cost.meta_backward;
                }
            }
            rep.l_unsup += l_unsup;
            add_scaled(total[v], g_hard, s.lambda_u);
        }

        std::vector<DropoutMask> adv_masks;
        std::optional<StudentGrads> g_adv;
        if (use_adv) {
            adv_masks = draw_masks(st.view_seeds[v], kTagAdv, t, d.unlabeled_rows, hidden, f.dropout_rate);
            LossAndGrads adv = loss_and_grads(f, perturbed[v], {}, LossKind::entropy, adv_masks);
            cost.student_forward += nu;
            cost.student_backward += nu;
            rep.l_adv += adv.loss;
            add_scaled(total[v], adv.grads, s.lambda_adv);
            g_adv = std::move(adv.grads);
        }

        if (teacher_active) {
            ViewMetaBatch& b = meta[v];
            b.unlabeled = use_unsup ? d.unlabeled[v] : DenseMatrix();
            if (use_unsup) {
                b.pseudo_labels = targets[v].labels;
                b.source_mi = targets[v].source_mi;
                b.unsup_masks = std::move(unsup_masks);
            }
            b.direction = cfg.direction;
            if (use_adv) {
                b.perturbed = perturbed[v];
                b.adv_masks = std::move(adv_masks);
            }
            b.validation = d.validation[v];
            b.validation_labels = d.validation_labels;
            if (meta_shared) {
                b.unsup_grads = std::move(g_soft);
                b.tau_grads = std::move(g_tau);
                b.adv_grads = use_adv ? std::move(g_adv) : std::optional<StudentGrads>(StudentGrads::zeros(shape));
            }
        }
    }
    rep.l_total = rep.l_sup + s.lambda_u * rep.l_unsup + s.lambda_adv * rep.l_adv;

    // both students see the same lr schedule position, so one eta serves the virtual update
    std::optional<MetaGradient> mg;
    if (meta_shared) mg = meta_grad(st.teacher, st.students, meta, lr[0]);

    for (std::size_t v = 0; v < 2; ++v) sgd_step(st.students[v], total[v], st.optimizers[v]);

    if (teacher_active && !mg) {
        mg = meta_grad(st.teacher, st.students, meta, lr[0]);
        const std::size_t adv_rows = use_adv ? nu : 0;
        const std::size_t unsup_rows = use_unsup ? nu : 0;
        cost.meta_forward += 2 * (unsup_rows + adv_rows);
        cost.meta_backward += 2 * (2 * unsup_rows + adv_rows);
    }
    if (mg) {
        cost.validation_forward += 2 * d.validation_labels.size();
        cost.validation_backward += 2 * d.validation_labels.size();
        teacher_step(st.teacher, mg->dz);
        rep.meta_gradient = mg->dz;
    }
    ++st.step;
    return rep;
}

PerturbConfig attack_config(const TrainConfig& cfg) {
    PerturbConfig a;
    a.epsilon = cfg.perturb.epsilon;
    a.gamma = 0.0;
    a.steps = cfg.attack_steps;
    a.step_size = cfg.attack_step_fraction * cfg.perturb.epsilon;
    return a;
}

namespace {

Vector eval_probs(const StudentParams& f, std::span<const double> x) {
    const ForwardPass pass = forward(f, x, nullptr);
    Vector p(pass.logits.size());
    softmax_into(pass.logits, p);
    return p;
}

std::size_t argmax_of(std::span<const double> p) {
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

Vector ensemble(std::span<const double> a, std::span<const double> b) {
    Vector m(a.size());
    for (std::size_t c = 0; c < a.size(); ++c) m[c] = 0.5 * (a[c] + b[c]);
    return m;
}

}  // namespace

EvalMetrics evaluate(const std::array<StudentParams, 2>& students, const TwoViewDataset& ds,
                     std::span<const std::size_t> rows, const PerturbConfig* attack) {
    if (rows.empty()) throw InvalidInput("evaluate: no rows");
    EvalMetrics m;
    m.n = rows.size();
    std::size_t correct = 0, robust = 0, agree = 0;
    double h = 0.0;
    for (std::size_t r : rows) {
        const int y = ds.true_labels[r] != kUnlabeled ? ds.true_labels[r] : ds.labels[r];
        const Vector p1 = eval_probs(students[0], ds.view1.row(r));
        const Vector p2 = eval_probs(students[1], ds.view2.row(r));
        const Vector pm = ensemble(p1, p2);
        const std::size_t pred = argmax_of(pm);
        h += entropy_unchecked(pm);
        if (argmax_of(p1) == argmax_of(p2)) ++agree;
        const bool ok = y != kUnlabeled && pred == static_cast<std::size_t>(y);
        if (ok) ++correct;
        if (attack && ok) {
            const auto label = static_cast<std::size_t>(y);
            Vector x1(ds.view1.row(r).begin(), ds.view1.row(r).end());
            Vector x2(ds.view2.row(r).begin(), ds.view2.row(r).end());
            const Vector d1 = pgd_attack_cross_entropy(students[0], x1, label, *attack);
            const Vector d2 = pgd_attack_cross_entropy(students[1], x2, label, *attack);
            for (std::size_t i = 0; i < x1.size(); ++i) x1[i] += d1[i];
            for (std::size_t i = 0; i < x2.size(); ++i) x2[i] += d2[i];
            if (argmax_of(ensemble(eval_probs(students[0], x1), eval_probs(students[1], x2))) == label) ++robust;
        }
    }
    const double n = static_cast<double>(rows.size());
    m.accuracy = static_cast<double>(correct) / n;
    if (attack) m.pgd_robust_accuracy = static_cast<double>(robust) / n;
    m.mean_entropy = h / n;
    m.agreement = static_cast<double>(agree) / n;
    return m;
}

BinHistogram bin_error_histogram(const std::array<StudentParams, 2>& students, const TwoViewDataset& ds,
                                 std::span<const std::size_t> rows, std::size_t bins) {
    if (bins < 2) throw InvalidInput("bin_error_histogram: bins must be >= 2");
    BinHistogram out;
    out.counts.assign(bins, 0);
    std::vector<std::size_t> wrong(bins, 0);
    for (std::size_t r : rows) {
        const int y = ds.true_labels[r];
        if (y == kUnlabeled) continue;
        const Vector pm = ensemble(eval_probs(students[0], ds.view1.row(r)), eval_probs(students[1], ds.view2.row(r)));
        const std::size_t pred = argmax_of(pm);
        const double conf = pm[pred];
        const auto b = std::min(bins - 1, static_cast<std::size_t>(conf * static_cast<double>(bins)));
        ++out.counts[b];
        if (pred != static_cast<std::size_t>(y)) ++wrong[b];
    }
    out.mismatch_rate.resize(bins);
    for (std::size_t b = 0; b < bins; ++b)
        if (out.counts[b] > 0)
            out.mismatch_rate[b] = static_cast<double>(wrong[b]) / static_cast<double>(out.counts[b]);
    return out;
}

ConvergenceMonitor::ConvergenceMonitor(std::size_t window) : window_(window) {
    if (window < 2) throw InvalidInput("ConvergenceMonitor: window must be >= 2");
}

void ConvergenceMonitor::push(double mean_entropy, double agreement) {
    if (!(agreement >= 0.0 && agreement <= 1.0)) throw InvalidInput("ConvergenceMonitor: agreement outside [0,1]");
    entropy_.push_back(mean_entropy);
    agreement_.push_back(agreement);
}

namespace {
std::optional<double> window_range(const std::vector<double>& v, std::size_t w) {
    if (v.size() < w) return std::nullopt;
    const auto [lo, hi] = std::minmax_element(v.end() - static_cast<std::ptrdiff_t>(w), v.end());
    return *hi - *lo;
}
}  // namespace

std::optional<double> ConvergenceMonitor::delta_entropy() const { return window_range(entropy_, window_); }
std::optional<double> ConvergenceMonitor::delta_agreement() const { return window_range(agreement_, window_); }

bool ConvergenceMonitor::converged(double delta_h, double delta_a) const {
    const auto dh = delta_entropy();
    const auto da = delta_agreement();
    return dh && da && *dh < delta_h && *da < delta_a;
}

CostSummary cost_counters(std::span<const StepReport> steps) {
    if (steps.empty()) throw InvalidInput("cost_counters: no steps recorded");
    CostCounters sum;
    for (const auto& s : steps) sum += s.cost;
    CostSummary out;
    out.steps = steps.size();
    const std::size_t n = steps.size();
    out.per_step = {sum.student_forward / n,  sum.student_backward / n, sum.mi_forward / n,
                    sum.perturb_gradient / n, sum.perturb_forward / n,  sum.meta_backward / n,
                    sum.meta_forward / n,     sum.validation_forward / n, sum.validation_backward / n};
    out.units_per_step = sum.units() / static_cast<double>(n);
    out.student_units_per_step = sum.student_units() / static_cast<double>(n);
    out.ratio = out.student_units_per_step > 0.0 ? out.units_per_step / out.student_units_per_step : 1.0;
    return out;
}

TrainingReport run_training(const TrainConfig& cfg, const TwoViewDataset& ds) {
    cfg.validate();
    ds.validate();
    const StudentShape s1{ds.view1.cols(), cfg.hidden, ds.classes};
    const StudentShape s2{ds.view2.cols(), cfg.hidden, ds.classes};

    BatchPlan plan;
    plan.labeled_batch = cfg.labeled_batch;
    plan.unlabeled_ratio = cfg.unlabeled_ratio;
    plan.seed = derive_seed(cfg.seed, {kTagBatch});
    plan.class_balanced = cfg.class_balanced;
    BatchIterator batches(ds, plan);
    const std::size_t steps_per_epoch = cfg.steps_per_epoch > 0 ? cfg.steps_per_epoch : batches.steps_per_epoch();

    TrainingReport rep;
    rep.final_state = init_trainer(cfg, s1, s2, cfg.epochs * steps_per_epoch);
    TrainerState& st = rep.final_state;
    rep.stop_reason = "epochs";
    rep.strategy_trace.push_back(st.teacher.mapped());

    auto eval_rows = ds.indices_of(Split::test);
    if (eval_rows.empty()) eval_rows = ds.indices_of(Split::validation);
    const auto unlabeled_rows = ds.indices_of(Split::unlabeled);
    const PerturbConfig attack = attack_config(cfg);

    StrategyHistory history(cfg.stability_window);
    std::vector<double> scores;
    ConvergenceMonitor monitor(cfg.convergence_window);

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        EpochMetrics em;
        em.epoch = e;
        double mask_sum = 0.0, imp_sum = 0.0;
        std::size_t mask_n = 0, imp_n = 0;
        for (std::size_t k = 0; k < steps_per_epoch; ++k) {
            StepData data = gather_step(ds, batches.next());
            data.epoch = e;
            StepReport sr = train_step(st, cfg, data);
            em.l_sup += sr.l_sup;
            em.l_unsup += sr.l_unsup;
            em.l_adv += sr.l_adv;
            em.l_total += sr.l_total;
            for (const auto& vs : sr.views) {
                if (vs.candidates == 0) continue;
                mask_sum += vs.mask_rate;
                ++mask_n;
                if (vs.impurity) {
                    imp_sum += *vs.impurity;
                    ++imp_n;
                }
            }
            rep.strategy_trace.push_back(st.teacher.mapped());
            rep.steps.push_back(std::move(sr));
        }
        const double inv = 1.0 / static_cast<double>(steps_per_epoch);
        em.l_sup *= inv;
        em.l_unsup *= inv;
        em.l_adv *= inv;
        em.l_total *= inv;
        em.strategy = st.teacher.mapped();
        em.mask_rate = mask_n ? mask_sum / static_cast<double>(mask_n) : 0.0;
        if (imp_n) em.impurity = imp_sum / static_cast<double>(imp_n);

        const EvalMetrics ev = evaluate(st.students, ds, eval_rows, cfg.robust_eval_each_epoch ? &attack : nullptr);
        em.accuracy = ev.accuracy;
        em.robust_accuracy = ev.pgd_robust_accuracy;
        if (!unlabeled_rows.empty()) {
            const EvalMetrics eu = evaluate(st.students, ds, unlabeled_rows, nullptr);
            em.mean_entropy = eu.mean_entropy;
            em.agreement = eu.agreement;
        } else {
            em.mean_entropy = ev.mean_entropy;
            em.agreement = ev.agreement;
        }
        monitor.push(em.mean_entropy, em.agreement);

        history.push(em.strategy);
        if (history.size() == history.window()) {
            em.stability = stability_score(history);
            scores.push_back(*em.stability);
        }
        rep.epochs.push_back(em);

        if (cfg.stability_stop && should_stop(scores, cfg.eps_stop, cfg.patience)) {
            rep.stop_reason = "teacher-stability";
            break;
        }
        if (cfg.convergence_stop && monitor.converged(cfg.delta_h, cfg.delta_a)) {
            rep.stop_reason = "convergence";
            break;
        }
    }
    rep.final_eval = evaluate(st.students, ds, eval_rows, &attack);
    return rep;
}

namespace {

std::array<std::vector<UncertaintyEstimate>, 2> pool_estimates(const TrainerState& st, const TrainConfig& cfg,
                                                               const std::array<DenseMatrix, 2>& x,
                                                               std::span<const std::size_t> rows) {
    std::array<std::vector<UncertaintyEstimate>, 2> est;
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t i = 0; i < rows.size(); ++i) {
            RngStream rng(derive_seed(st.view_seeds[v], {kTagMc, std::numeric_limits<std::uint64_t>::max(), rows[i]}));
            est[v].push_back(mutual_information(mc_forward(st.students[v], x[v].row(i), cfg.mc_passes, rng)));
        }
    return est;
}

std::array<DenseMatrix, 2> pool_perturbed(const TrainerState& st, const TrainConfig& cfg,
                                          const std::array<DenseMatrix, 2>& x, std::span<const std::size_t> rows) {
    std::array<DenseMatrix, 2> out = x;
    PgdOptions opts;
    opts.compute_residual = false;
    opts.compute_objective = false;
    for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t i = 0; i < rows.size(); ++i) {
            RngStream rng(derive_seed(st.view_seeds[v], {kTagGen, std::numeric_limits<std::uint64_t>::max(), rows[i]}));
            const Perturbation p = pgd_perturb(st.students[v], x[v].row(i), cfg.perturb, rng, opts);
            kernels::axpy(1.0, p.delta, out[v].row(i));
        }
    return out;
}

}  // namespace

double student_gradient_residual(const TrainerState& st, const TrainConfig& cfg, const TwoViewDataset& ds) {
    const auto lab = ds.indices_of(Split::labeled_train);
    const auto unl = ds.indices_of(Split::unlabeled);
    const StrategyTriple s = st.teacher.mapped();
    double worst = 0.0;
    std::array<DenseMatrix, 2> xl{ds.view1.gather_rows(lab), ds.view2.gather_rows(lab)};
    std::array<DenseMatrix, 2> xu{ds.view1.gather_rows(unl), ds.view2.gather_rows(unl)};
    std::vector<int> yl;
    for (std::size_t r : lab) yl.push_back(ds.labels[r]);

    std::array<std::vector<UncertaintyEstimate>, 2> est;
    std::array<FilterResult, 2> filt;
    std::array<UnsupTargets, 2> targets;
    const bool use_unsup = s.lambda_u > 0.0 && !unl.empty();
    if (use_unsup) {
        est = pool_estimates(st, cfg, xu, unl);
        for (std::size_t v = 0; v < 2; ++v) filt[v] = apply_filter(cfg, est[v], s.tau_mi);
        targets = cross_view_targets(est, filt);
    }
    const bool use_adv = cfg.generator_enabled && s.lambda_adv > 0.0 && !unl.empty();
    std::array<DenseMatrix, 2> xp;
    if (use_adv) xp = pool_perturbed(st, cfg, xu, unl);

    for (std::size_t v = 0; v < 2; ++v) {
        const StudentParams& f = st.students[v];
        StudentGrads g = loss_and_grads(f, xl[v], yl, LossKind::cross_entropy, {}).grads;
        if (use_unsup)
            add_scaled(g,
                       loss_and_grads(f, xu[v], targets[v].labels, LossKind::cross_entropy, {}, targets[v].hard_weights).grads,
                       s.lambda_u);
        if (use_adv) add_scaled(g, loss_and_grads(f, xp[v], {}, LossKind::entropy, {}).grads, s.lambda_adv);
        worst = std::max(worst, grads_inf_norm(g));
    }
    return worst;
}

MetaGradient full_meta_gradient(const TrainerState& st, const TrainConfig& cfg, const TwoViewDataset& ds,
                                double eta_student) {
    const auto unl = ds.indices_of(Split::unlabeled);
    const auto val = ds.indices_of(Split::validation);
    if (val.empty()) throw InvalidInput("full_meta_gradient: no validation rows");
    std::array<DenseMatrix, 2> xu{ds.view1.gather_rows(unl), ds.view2.gather_rows(unl)};
    const auto est = pool_estimates(st, cfg, xu, unl);
    std::array<FilterResult, 2> filt;
    for (std::size_t v = 0; v < 2; ++v) filt[v] = apply_filter(cfg, est[v], st.teacher.mapped().tau_mi);
    const auto targets = cross_view_targets(est, filt);
    std::array<DenseMatrix, 2> xp;
    if (cfg.generator_enabled) xp = pool_perturbed(st, cfg, xu, unl);

    std::vector<int> yv;
    for (std::size_t r : val) yv.push_back(ds.labels[r]);
    std::array<ViewMetaBatch, 2> meta;
    for (std::size_t v = 0; v < 2; ++v) {
        const std::uint64_t step_key = std::numeric_limits<std::uint64_t>::max();
        ViewMetaBatch& b = meta[v];
        b.unlabeled = xu[v];
        b.pseudo_labels = targets[v].labels;
        b.source_mi = targets[v].source_mi;
        b.direction = cfg.direction;
        b.unsup_masks = draw_masks(st.view_seeds[v], kTagUnsup, step_key, unl, cfg.hidden, cfg.dropout);
        if (cfg.generator_enabled) {
            b.perturbed = xp[v];
            b.adv_masks = draw_masks(st.view_seeds[v], kTagAdv, step_key, unl, cfg.hidden, cfg.dropout);
        }
        b.validation = v == 0 ? ds.view1.gather_rows(val) : ds.view2.gather_rows(val);
        b.validation_labels = yv;
    }
    return meta_grad(st.teacher, st.students, meta, eta_student);
}

namespace {

std::string opt_num(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream ss;
    ss << std::setprecision(17) << *v;
    return ss.str();
}

}  // namespace

void write_curves_csv(const std::string& path, const TrainingReport& report) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << "epoch,l_sup,l_unsup,l_adv,tau_mi,lambda_u,lambda_adv,accuracy,mask_rate,impurity,mean_entropy,agreement\n";
    for (const auto& e : report.epochs)
        out << e.epoch << ',' << e.l_sup << ',' << e.l_unsup << ',' << e.l_adv << ',' << e.strategy.tau_mi << ','
            << e.strategy.lambda_u << ',' << e.strategy.lambda_adv << ',' << e.accuracy << ',' << e.mask_rate << ','
            << opt_num(e.impurity) << ',' << e.mean_entropy << ',' << e.agreement << '\n';
}

void write_strategy_trace_csv(const std::string& path, const TrainingReport& report) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path);
    out << std::setprecision(17);
    out << "step,tau_mi,lambda_u,lambda_adv\n";
    for (std::size_t i = 0; i < report.strategy_trace.size(); ++i) {
        const auto& s = report.strategy_trace[i];
        out << i << ',' << s.tau_mi << ',' << s.lambda_u << ',' << s.lambda_adv << '\n';
    }
}

}  // namespace trico

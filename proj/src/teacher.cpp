#include "trico/teacher.hpp"

#include <cmath>

#include "trico/error.hpp"
#include "trico/kernels.hpp"

namespace trico {

StrategyTriple map_strategy(const RawStrategy& z) noexcept {
    const double s1 = sigmoid(z[0]);
    const double s2 = sigmoid(z[1]);
    const double s3 = sigmoid(z[2]);
    const double sum = s2 + s3;
    if (sum <= 1.0) return {s1, s2, s3};
    // the two quotients can round to a sum one ulp above 1
    double lu = s2 / sum, la = s3 / sum;
    while (lu + la > 1.0) la = std::nextafter(la, 0.0);
    return {s1, lu, la};
}

std::array<std::array<double, 3>, 3> map_jacobian(const RawStrategy& z) noexcept {
    const double s1 = sigmoid(z[0]);
    const double s2 = sigmoid(z[1]);
    const double s3 = sigmoid(z[2]);
    const double d1 = s1 * (1.0 - s1);
    const double d2 = s2 * (1.0 - s2);
    const double d3 = s3 * (1.0 - s3);
    std::array<std::array<double, 3>, 3> j{};
    j[0][0] = d1;
    const double sum = s2 + s3;
    if (sum <= 1.0) {
        j[1][1] = d2;
        j[2][2] = d3;
    } else {
        const double inv2 = 1.0 / (sum * sum);
        j[1][1] = s3 * inv2 * d2;
        j[1][2] = -s2 * inv2 * d3;
        j[2][1] = -s3 * inv2 * d2;
        j[2][2] = s2 * inv2 * d3;
    }
    return j;
}

TeacherStrategy TeacherStrategy::from_values(StrategyTriple init, double lr_teacher, double gate_temperature) {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(init.tau_mi) || !in_unit(init.lambda_u) || !in_unit(init.lambda_adv))
        throw InvalidInput("teacher init: values must lie in [0,1]");
    if (init.lambda_u + init.lambda_adv > 1.0) throw InvalidInput("teacher init: lambda_u + lambda_adv > 1");
    if (!(gate_temperature > 0.0)) throw InvalidInput("teacher init: gate temperature must be > 0");
    return {{logit(init.tau_mi), logit(init.lambda_u), logit(init.lambda_adv)}, lr_teacher, gate_temperature};
}

double soft_gate(double mi, double tau, double temperature, FilterDirection direction) {
    if (!(temperature > 0.0)) throw InvalidInput("soft_gate: temperature must be > 0");
    const double u = (mi - tau) / temperature;
    return sigmoid(direction == FilterDirection::above ? u : -u);
}

double soft_gate_dtau(double mi, double tau, double temperature, FilterDirection direction) {
    const double g = soft_gate(mi, tau, temperature, direction);
    const double d = g * (1.0 - g) / temperature;
    return direction == FilterDirection::above ? -d : d;
}

namespace {

void check_meta_inputs(std::span<const StudentParams> students, std::span<const ViewMetaBatch> batches) {
    if (students.size() != batches.size() || students.empty()) throw InvalidInput("meta_grad: one batch per student");
    for (const auto& b : batches) {
        if (b.validation.rows() == 0) throw InvalidInput("meta_grad: empty validation batch");
        if (b.validation_labels.size() != b.validation.rows())
            throw InvalidInput("meta_grad: validation labels length mismatch");
        const std::size_t n = b.unlabeled.rows();
        if (b.pseudo_labels.size() != n || b.source_mi.size() != n || b.unsup_masks.size() != n)
            throw InvalidInput("meta_grad: unlabeled batch fields disagree in length");
        if (b.perturbed.rows() != 0 && b.adv_masks.size() != b.perturbed.rows())
            throw InvalidInput("meta_grad: adversarial masks length mismatch");
    }
}

struct InnerGradients {
    StudentGrads unsup;  // ∇ L_unsup_soft
    StudentGrads tau;    // ∇ ∂L_unsup_soft/∂tau
    StudentGrads adv;    // ∇ L_adv
};

// One forward per unlabeled row, two weighted backward passes.
InnerGradients inner_gradients(const StudentParams& params, const ViewMetaBatch& b, double tau, double temperature,
                               bool need_tau, bool use_precomputed) {
    const StudentShape shape = params.shape();
    InnerGradients g{StudentGrads::zeros(shape), StudentGrads::zeros(shape), StudentGrads::zeros(shape)};
    const std::size_t n = b.unlabeled.rows();
    if (use_precomputed && b.unsup_grads && b.tau_grads) {
        g.unsup = *b.unsup_grads;
        g.tau = *b.tau_grads;
    } else if (n > 0) {
        const double inv_n = 1.0 / static_cast<double>(n);
        ForwardPass pass;
        Vector probs(shape.classes), dlogits(shape.classes);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = soft_gate(b.source_mi[i], tau, temperature, b.direction);
            const double wt = need_tau ? soft_gate_dtau(b.source_mi[i], tau, temperature, b.direction) : 0.0;
            if (w == 0.0 && wt == 0.0) continue;
            forward_into(params, b.unlabeled.row(i), &b.unsup_masks[i], pass);
            softmax_into(pass.logits, probs);
            cross_entropy_logit_grad(probs, static_cast<std::size_t>(b.pseudo_labels[i]), dlogits);
            if (w != 0.0) backward(params, pass, dlogits, w * inv_n, &g.unsup, {});
            if (wt != 0.0) backward(params, pass, dlogits, wt * inv_n, &g.tau, {});
        }
    }
    if (use_precomputed && b.adv_grads) {
        g.adv = *b.adv_grads;
    } else if (b.perturbed.rows() > 0) {
        g.adv = loss_and_grads(params, b.perturbed, {}, LossKind::entropy, b.adv_masks).grads;
    }
    return g;
}

double inner(const StudentGrads& a, const StudentGrads& b) {
    return kernels::dot(a.w1.flat(), b.w1.flat()) + kernels::dot(a.b1, b.b1) + kernels::dot(a.w2.flat(), b.w2.flat()) +
           kernels::dot(a.b2, b.b2);
}

StudentParams virtual_update(const StudentParams& params, const InnerGradients& g, const StrategyTriple& t,
                             double eta) {
    StudentParams out = params;
    auto apply = [&](std::span<double> theta, std::span<const double> gu, std::span<const double> ga) {
        kernels::axpy(-eta * t.lambda_u, gu, theta);
        kernels::axpy(-eta * t.lambda_adv, ga, theta);
    };
    apply(out.w1.flat(), g.unsup.w1.flat(), g.adv.w1.flat());
    apply(out.b1, g.unsup.b1, g.adv.b1);
    apply(out.w2.flat(), g.unsup.w2.flat(), g.adv.w2.flat());
    apply(out.b2, g.unsup.b2, g.adv.b2);
    return out;
}

}  // namespace

MetaGradient meta_grad(const TeacherStrategy& strategy, std::span<const StudentParams> students,
                       std::span<const ViewMetaBatch> batches, double eta_student) {
    check_meta_inputs(students, batches);
    const StrategyTriple t = strategy.mapped();
    MetaGradient out;
    for (std::size_t v = 0; v < students.size(); ++v) {
        const auto& b = batches[v];
        const InnerGradients g = inner_gradients(students[v], b, t.tau_mi, strategy.gate_temperature, true, true);
        const StudentParams updated = virtual_update(students[v], g, t, eta_student);
        const LossAndGrads val = loss_and_grads(updated, b.validation, b.validation_labels, LossKind::cross_entropy, {});
        out.validation_loss += val.loss;
        out.dtriple[0] += -eta_student * t.lambda_u * inner(val.grads, g.tau);
        out.dtriple[1] += -eta_student * inner(val.grads, g.unsup);
        out.dtriple[2] += -eta_student * inner(val.grads, g.adv);
    }
    const auto jac = map_jacobian(strategy.z);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < 3; ++r) out.dz[c] += jac[r][c] * out.dtriple[r];
    return out;
}

double unrolled_validation_loss(const RawStrategy& z, double gate_temperature, std::span<const StudentParams> students,
                                std::span<const ViewMetaBatch> batches, double eta_student) {
    check_meta_inputs(students, batches);
    const StrategyTriple t = map_strategy(z);
    double total = 0.0;
    for (std::size_t v = 0; v < students.size(); ++v) {
        const auto& b = batches[v];
        const InnerGradients g = inner_gradients(students[v], b, t.tau_mi, gate_temperature, false, false);
        const StudentParams updated = virtual_update(students[v], g, t, eta_student);
        total += batch_loss(updated, b.validation, b.validation_labels, LossKind::cross_entropy, {});
    }
    return total;
}

void teacher_step(TeacherStrategy& strategy, const RawStrategy& g) {
    for (std::size_t i = 0; i < 3; ++i) strategy.z[i] -= strategy.lr_teacher * g[i];
}

StrategyHistory::StrategyHistory(std::size_t window) : window_(window) {
    if (window == 0) throw InvalidInput("StrategyHistory: window must be >= 1");
}

void StrategyHistory::push(const StrategyTriple& t) {
    entries_.push_back(t);
    while (entries_.size() > window_) entries_.pop_front();
}

double stability_score(const StrategyHistory& history) {
    if (history.size() < 2) throw InsufficientHistory("stability_score: need at least 2 entries");
    Vector tau, lu, la;
    for (const auto& e : history.entries()) {
        tau.push_back(e.tau_mi);
        lu.push_back(e.lambda_u);
        la.push_back(e.lambda_adv);
    }
    return population_variance(tau) + population_variance(lu) + population_variance(la);
}

bool should_stop(std::span<const double> scores, double eps_stop, std::size_t patience) {
    if (patience == 0) throw InvalidInput("should_stop: patience must be >= 1");
    if (scores.size() < patience) return false;
    for (std::size_t i = scores.size() - patience; i < scores.size(); ++i)
        if (!(scores[i] < eps_stop)) return false;
    return true;
}

}  // namespace trico

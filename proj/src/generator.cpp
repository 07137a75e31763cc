#include "trico/generator.hpp"

#include <algorithm>
#include <cmath>

#include "trico/error.hpp"
#include "trico/uncertainty.hpp"

namespace trico {

void PerturbConfig::validate() const {
    if (!(epsilon > 0.0)) throw InvalidInput("PerturbConfig: epsilon must be > 0");
    if (!(gamma >= 0.0)) throw InvalidInput("PerturbConfig: gamma must be >= 0");
    if (steps == 0) throw InvalidInput("PerturbConfig: steps must be >= 1");
    if (!(step_size > 0.0)) throw InvalidInput("PerturbConfig: step_size must be > 0");
    if (gamma > 0.0 && mi_passes == 0) throw InvalidInput("PerturbConfig: mi_passes must be >= 1 when gamma > 0");
}

Vector project_linf(std::span<const double> delta, double epsilon) {
    Vector out(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) out[i] = std::clamp(delta[i], -epsilon, epsilon);
    return out;
}

namespace {

Vector shifted(std::span<const double> x, std::span<const double> delta) {
    Vector v(x.begin(), x.end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += delta[i];
    return v;
}

double sign(double g) noexcept { return g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0); }

// One projected sign step; returns whether any coordinate had a nonzero gradient.
bool sign_step(Vector& delta, std::span<const double> grad, double step, double epsilon) {
    bool any = false;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double s = sign(grad[i]);
        any = any || s != 0.0;
        delta[i] = std::clamp(delta[i] + step * s, -epsilon, epsilon);
    }
    return any;
}

void check_delta(const StudentParams& params, std::span<const double> x, std::span<const double> delta) {
    if (x.size() != params.w1.rows() || delta.size() != x.size())
        throw InvalidInput("perturbation: shape mismatch");
}

}  // namespace

double entropy_input_gradient(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                              std::span<double> grad) {
    check_delta(params, x, delta);
    const Vector xp = shifted(x, delta);
    ForwardPass pass;
    forward_into(params, xp, nullptr, pass);
    Vector probs(pass.logits.size());
    Vector dlogits(pass.logits.size());
    softmax_into(pass.logits, probs);
    const double h = entropy_logit_grad(probs, dlogits);
    backward(params, pass, dlogits, 1.0, nullptr, grad);
    return h;
}

// MI = H(p̄) - (1/K) Σ H(p_k). dMI/dp̄_j = -(log p̄_j + 1); pulled back through
// each pass's softmax Jacobian, then minus (1/K) of each pass's entropy gradient.
double mi_input_gradient(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                         std::span<const DropoutMask> masks, std::span<double> grad) {
    check_delta(params, x, delta);
    if (masks.empty()) throw InvalidInput("mi_input_gradient: no masks");
    const std::size_t k_passes = masks.size();
    const std::size_t c = params.w2.cols();
    const Vector xp = shifted(x, delta);

    std::vector<ForwardPass> passes(k_passes);
    std::vector<Vector> probs(k_passes, Vector(c));
    Vector mean(c, 0.0);
    for (std::size_t k = 0; k < k_passes; ++k) {
        forward_into(params, xp, &masks[k], passes[k]);
        softmax_into(passes[k].logits, probs[k]);
        for (std::size_t j = 0; j < c; ++j) mean[j] += probs[k][j] / static_cast<double>(k_passes);
    }
    const double inv_k = 1.0 / static_cast<double>(k_passes);
    Vector dmean(c);
    for (std::size_t j = 0; j < c; ++j) dmean[j] = mean[j] > 0.0 ? -(std::log(mean[j]) + 1.0) * inv_k : 0.0;

    std::fill(grad.begin(), grad.end(), 0.0);
    double expected = 0.0;
    Vector dlogits(c), dent(c), dx(x.size());
    for (std::size_t k = 0; k < k_passes; ++k) {
        const auto& p = probs[k];
        double inner = 0.0;
        for (std::size_t j = 0; j < c; ++j) inner += dmean[j] * p[j];
        expected += entropy_logit_grad(p, dent);
        for (std::size_t j = 0; j < c; ++j) dlogits[j] = p[j] * (dmean[j] - inner) - inv_k * dent[j];
        backward(params, passes[k], dlogits, 1.0, nullptr, dx);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += dx[i];
    }
    return std::max(0.0, entropy_unchecked(mean) - expected * inv_k);
}

double perturb_objective(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                         const PerturbConfig& cfg, RngStream& rng) {
    check_delta(params, x, delta);
    const Vector xp = shifted(x, delta);
    const ForwardPass pass = forward(params, xp, nullptr);
    double value = entropy(softmax(pass.logits));
    if (cfg.gamma > 0.0) {
        const auto samples = mc_forward(params, xp, cfg.mi_passes, rng);
        value += cfg.gamma * mutual_information(samples).mi;
    }
    return value;
}

Perturbation pgd_perturb(const StudentParams& params, std::span<const double> x, const PerturbConfig& cfg,
                         RngStream& rng, PgdOptions options) {
    cfg.validate();
    const std::size_t d = x.size();
    Perturbation out;
    out.delta.assign(d, 0.0);
    Vector grad(d), mi_grad(d);
    std::vector<DropoutMask> masks;

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        double value = entropy_input_gradient(params, x, out.delta, grad);
        if (cfg.gamma > 0.0) {
            // masks frozen for this step so the MI term is a smooth function of delta
            masks.clear();
            for (std::size_t k = 0; k < cfg.mi_passes; ++k)
                masks.push_back(DropoutMask::draw(rng.next_u64(), params.w1.cols(), params.dropout_rate));
            value += cfg.gamma * mi_input_gradient(params, x, out.delta, masks, mi_grad);
            for (std::size_t i = 0; i < d; ++i) grad[i] += cfg.gamma * mi_grad[i];
        }
        if (options.record_trace) out.objective_trace.push_back(value);
        const bool moved = sign_step(out.delta, grad, cfg.step_size, cfg.epsilon);
        if (!moved && step == 0) {
            out.zero_gradient = true;
            break;
        }
    }

    if (options.compute_objective || options.record_trace) {
        out.objective_value = perturb_objective(params, x, out.delta, cfg, rng);
        if (options.record_trace) out.objective_trace.push_back(out.objective_value);
    }
    if (options.compute_residual && !out.zero_gradient)
        out.fixed_point_residual = fixed_point_residual(params, x, out.delta, cfg);
    return out;
}

double fixed_point_residual(const StudentParams& params, std::span<const double> x, std::span<const double> delta,
                            const PerturbConfig& cfg) {
    if (norm_inf(delta) > cfg.epsilon + 1e-12) throw InvalidInput("fixed_point_residual: delta outside the ball");
    Vector grad(x.size());
    entropy_input_gradient(params, x, delta, grad);
    double r = 0.0;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double image = std::clamp(delta[i] + cfg.step_size * grad[i], -cfg.epsilon, cfg.epsilon);
        r = std::max(r, std::abs(delta[i] - image));
    }
    return r;
}

Vector pgd_attack_cross_entropy(const StudentParams& params, std::span<const double> x, std::size_t label,
                                const PerturbConfig& cfg) {
    cfg.validate();
    Vector delta(x.size(), 0.0);
    Vector grad(x.size());
    ForwardPass pass;
    Vector probs(params.w2.cols()), dlogits(params.w2.cols());
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const Vector xp = shifted(x, delta);
        forward_into(params, xp, nullptr, pass);
        softmax_into(pass.logits, probs);
        cross_entropy_logit_grad(probs, label, dlogits);
        backward(params, pass, dlogits, 1.0, nullptr, grad);
        if (!sign_step(delta, grad, cfg.step_size, cfg.epsilon)) break;
    }
    return delta;
}

}  // namespace trico

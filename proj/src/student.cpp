#include "trico/student.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "trico/error.hpp"
#include "trico/kernels.hpp"

namespace trico {

StudentParams StudentParams::zeros(StudentShape shape, double dropout_rate) {
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidInput("dropout_rate must be in [0,1)");
    return {DenseMatrix(shape.d_in, shape.hidden), Vector(shape.hidden, 0.0), DenseMatrix(shape.hidden, shape.classes),
            Vector(shape.classes, 0.0), dropout_rate};
}

StudentParams StudentParams::init(StudentShape shape, double dropout_rate, std::uint64_t seed) {
    if (shape.d_in == 0 || shape.hidden == 0 || shape.classes < 2) throw InvalidInput("StudentParams: bad shape");
    StudentParams p = zeros(shape, dropout_rate);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n1(0.0, 1.0 / std::sqrt(static_cast<double>(shape.d_in)));
    std::normal_distribution<double> n2(0.0, 1.0 / std::sqrt(static_cast<double>(shape.hidden)));
    for (double& w : p.w1.flat()) w = n1(gen);
    for (double& w : p.w2.flat()) w = n2(gen);
    return p;
}

StudentGrads StudentGrads::zeros(StudentShape shape) {
    return {DenseMatrix(shape.d_in, shape.hidden), Vector(shape.hidden, 0.0), DenseMatrix(shape.hidden, shape.classes),
            Vector(shape.classes, 0.0)};
}

std::size_t parameter_count(StudentShape s) noexcept {
    return s.d_in * s.hidden + s.hidden + s.hidden * s.classes + s.classes;
}

namespace {

template <class Tensors>
Vector flatten_impl(const Tensors& t) {
    Vector out;
    for_each_tensor(t, [&](auto span) { out.insert(out.end(), span.begin(), span.end()); });
    return out;
}

void check_input(const StudentParams& params, std::span<const double> x) {
    if (x.size() != params.w1.rows())
        throw InvalidInput("student forward: input length " + std::to_string(x.size()) + " != d_in " +
                           std::to_string(params.w1.rows()));
}

}  // namespace

Vector flatten(const StudentParams& p) { return flatten_impl(p); }
Vector flatten(const StudentGrads& g) { return flatten_impl(g); }

void unflatten(std::span<const double> flat, StudentParams& p) {
    if (flat.size() != parameter_count(p.shape())) throw InvalidInput("unflatten: size mismatch");
    std::size_t off = 0;
    for_each_tensor(p, [&](std::span<double> span) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), span.size(), span.begin());
        off += span.size();
    });
}

double l2_norm(const StudentParams& p) {
    double s = 0.0;
    for_each_tensor(p, [&](std::span<const double> span) { s += kernels::sum_squares(span); });
    return std::sqrt(s);
}

DropoutMask DropoutMask::draw(std::uint64_t seed, std::size_t hidden, double rate) {
    DropoutMask m{seed, std::vector<std::uint8_t>(hidden)};
    RngStream rng(seed);
    for (auto& k : m.keep) k = rng.uniform() >= rate ? 1 : 0;
    return m;
}

void forward_into(const StudentParams& params, std::span<const double> x, const DropoutMask* mask, ForwardPass& out) {
    check_input(params, x);
    const std::size_t h = params.w1.cols();
    if (mask != nullptr && mask->keep.size() != h) throw InvalidInput("forward: mask length != hidden units");

    auto& c = out.cache;
    c.input.assign(x.begin(), x.end());
    c.pre.assign(params.b1.begin(), params.b1.end());
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != 0.0) kernels::axpy(x[i], params.w1.row(i), c.pre);

    c.mask = mask;
    c.keep_scale = mask != nullptr ? 1.0 / (1.0 - params.dropout_rate) : 1.0;
    c.hidden.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
        const double a = gelu(c.pre[j]);
        c.hidden[j] = mask == nullptr ? a : (mask->keep[j] ? a * c.keep_scale : 0.0);
    }

    out.logits.assign(params.b2.begin(), params.b2.end());
    for (std::size_t j = 0; j < h; ++j)
        if (c.hidden[j] != 0.0) kernels::axpy(c.hidden[j], params.w2.row(j), out.logits);
}

ForwardPass forward(const StudentParams& params, std::span<const double> x, const DropoutMask* mask) {
    ForwardPass out;
    forward_into(params, x, mask, out);
    return out;
}

void backward(const StudentParams& params, const ForwardPass& pass, std::span<const double> dlogits, double weight,
              StudentGrads* grads, std::span<double> dx) {
    const auto& c = pass.cache;
    const std::size_t h = params.w1.cols();

    // Stack buffer would be nicer; hidden widths here are small.
    thread_local Vector dpre;
    dpre.resize(h);
    for (std::size_t j = 0; j < h; ++j) {
        double factor = gelu_grad(c.pre[j]);
        if (c.mask != nullptr) factor *= c.mask->keep[j] ? c.keep_scale : 0.0;
        dpre[j] = factor == 0.0 ? 0.0 : factor * kernels::dot(params.w2.row(j), dlogits);
    }

    if (grads != nullptr) {
        kernels::axpy(weight, dlogits, grads->b2);
        for (std::size_t j = 0; j < h; ++j)
            if (c.hidden[j] != 0.0) kernels::axpy(weight * c.hidden[j], dlogits, grads->w2.row(j));
        kernels::axpy(weight, dpre, grads->b1);
        for (std::size_t i = 0; i < c.input.size(); ++i)
            if (c.input[i] != 0.0) kernels::axpy(weight * c.input[i], dpre, grads->w1.row(i));
    }
    if (!dx.empty()) {
        for (std::size_t i = 0; i < c.input.size(); ++i) dx[i] = kernels::dot(params.w1.row(i), dpre);
    }
}

std::vector<ProbVector> mc_forward(const StudentParams& params, std::span<const double> x, std::size_t passes,
                                   RngStream& rng) {
    if (passes == 0) throw InvalidInput("mc_forward: K must be >= 1");
    std::vector<ProbVector> out;
    out.reserve(passes);
    ForwardPass pass;
    for (std::size_t k = 0; k < passes; ++k) {
        const DropoutMask mask = DropoutMask::draw(rng.next_u64(), params.w1.cols(), params.dropout_rate);
        forward_into(params, x, &mask, pass);
        out.push_back(softmax(pass.logits));
    }
    return out;
}

double cross_entropy_logit_grad(std::span<const double> probs, std::size_t y, std::span<double> dlogits) noexcept {
    const double py = probs[y];
    if (py < kProbFloor) {
        // clamp is active: loss is locally constant
        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        return -std::log(kProbFloor);
    }
    for (std::size_t k = 0; k < probs.size(); ++k) dlogits[k] = probs[k] - (k == y ? 1.0 : 0.0);
    return -std::log(py);
}

// dH/dz_k = -p_k (log p_k + H)
double entropy_logit_grad(std::span<const double> probs, std::span<double> dlogits) noexcept {
    const double h = entropy_unchecked(probs);
    for (std::size_t k = 0; k < probs.size(); ++k)
        dlogits[k] = probs[k] > 0.0 ? -probs[k] * (std::log(probs[k]) + h) : 0.0;
    return h;
}

namespace {

void check_batch(const StudentParams& params, const DenseMatrix& inputs, std::span<const int> targets, LossKind kind,
                 std::span<const DropoutMask> masks, std::span<const double> weights) {
    const std::size_t n = inputs.rows();
    if (n == 0) throw InvalidInput("loss_and_grads: empty batch");
    if (inputs.cols() != params.w1.rows()) throw InvalidInput("loss_and_grads: input width != d_in");
    if (kind == LossKind::cross_entropy) {
        if (targets.size() != n) throw InvalidInput("loss_and_grads: targets length != batch size");
        for (int y : targets)
            if (y < 0 || static_cast<std::size_t>(y) >= params.w2.cols())
                throw InvalidInput("loss_and_grads: target out of range");
    }
    if (!masks.empty() && masks.size() != n) throw InvalidInput("loss_and_grads: masks length != batch size");
    if (!weights.empty() && weights.size() != n) throw InvalidInput("loss_and_grads: weights length != batch size");
}

template <bool WithGrads>
double batch_impl(const StudentParams& params, const DenseMatrix& inputs, std::span<const int> targets, LossKind kind,
                  std::span<const DropoutMask> masks, std::span<const double> weights, StudentGrads* grads) {
    check_batch(params, inputs, targets, kind, masks, weights);
    const std::size_t n = inputs.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    ForwardPass pass;
    Vector probs(params.w2.cols());
    Vector dlogits(params.w2.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        if (w == 0.0) continue;
        forward_into(params, inputs.row(i), masks.empty() ? nullptr : &masks[i], pass);
        softmax_into(pass.logits, probs);
        const double li = kind == LossKind::cross_entropy
                              ? cross_entropy_logit_grad(probs, static_cast<std::size_t>(targets[i]), dlogits)
                              : entropy_logit_grad(probs, dlogits);
        total += w * li;
        if constexpr (WithGrads) backward(params, pass, dlogits, w * inv_n, grads, {});
    }
    return total * inv_n;
}

}  // namespace

LossAndGrads loss_and_grads(const StudentParams& params, const DenseMatrix& inputs, std::span<const int> targets,
                            LossKind kind, std::span<const DropoutMask> masks, std::span<const double> weights) {
    LossAndGrads out{0.0, StudentGrads::zeros(params.shape())};
    out.loss = batch_impl<true>(params, inputs, targets, kind, masks, weights, &out.grads);
    return out;
}

double batch_loss(const StudentParams& params, const DenseMatrix& inputs, std::span<const int> targets, LossKind kind,
                  std::span<const DropoutMask> masks, std::span<const double> weights) {
    return batch_impl<false>(params, inputs, targets, kind, masks, weights, nullptr);
}

OptimizerState OptimizerState::make(StudentShape shape, double base_lr, double momentum, std::size_t total_steps) {
    if (!(base_lr > 0.0)) throw InvalidInput("OptimizerState: base_lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("OptimizerState: momentum must be in [0,1)");
    return {StudentGrads::zeros(shape), momentum, base_lr, 0, std::max<std::size_t>(total_steps, 1), std::nullopt};
}

double OptimizerState::learning_rate() const noexcept {
    const double frac = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_step(StudentParams& params, const StudentGrads& grads, OptimizerState& opt) {
    if (grads.w1.rows() != params.w1.rows() || grads.w1.cols() != params.w1.cols() ||
        grads.w2.cols() != params.w2.cols() || opt.velocity.w1.size() != params.w1.size())
        throw InvalidInput("sgd_step: shape mismatch");
    const double lr = opt.learning_rate();
    auto update = [&](std::span<double> theta, std::span<const double> g, std::span<double> v) {
        kernels::scale(opt.momentum, v);
        kernels::axpy(1.0, g, v);
        kernels::axpy(-lr, v, theta);
    };
    update(params.w1.flat(), grads.w1.flat(), opt.velocity.w1.flat());
    update(params.b1, grads.b1, opt.velocity.b1);
    update(params.w2.flat(), grads.w2.flat(), opt.velocity.w2.flat());
    update(params.b2, grads.b2, opt.velocity.b2);
    ++opt.step;

    if (opt.norm_bound) {
        const double norm = l2_norm(params);
        if (norm > *opt.norm_bound) {
            const double s = *opt.norm_bound / norm;
            for_each_tensor(params, [&](std::span<double> span) { kernels::scale(s, span); });
        }
    }
}

}  // namespace trico

#pragma once

// Two-layer GELU MLP student with hidden-layer inverted dropout, analytic
// reverse-mode gradients and SGD with momentum on a cosine schedule.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "trico/numerics.hpp"
#include "trico/rng.hpp"

namespace trico {

struct StudentShape {
    std::size_t d_in = 0;
    std::size_t hidden = 0;
    std::size_t classes = 0;

    friend bool operator==(const StudentShape&, const StudentShape&) = default;
};

struct StudentParams {
    DenseMatrix w1;  // d_in x hidden
    Vector b1;       // hidden
    DenseMatrix w2;  // hidden x classes
    Vector b2;       // classes
    double dropout_rate = 0.1;

    StudentShape shape() const noexcept { return {w1.rows(), w1.cols(), w2.cols()}; }

    static StudentParams zeros(StudentShape shape, double dropout_rate);
    /// LeCun-normal weights, zero biases.
    static StudentParams init(StudentShape shape, double dropout_rate, std::uint64_t seed);

    friend bool operator==(const StudentParams&, const StudentParams&) = default;
};

/// Same tensor layout as StudentParams, used for gradients and momentum buffers.
struct StudentGrads {
    DenseMatrix w1;
    Vector b1;
    DenseMatrix w2;
    Vector b2;

    static StudentGrads zeros(StudentShape shape);

    friend bool operator==(const StudentGrads&, const StudentGrads&) = default;
};

/// Calls f(span) on w1, b1, w2, b2 in that order. This is also the flat layout.
template <class Tensors, class F>
void for_each_tensor(Tensors& t, F&& f) {
    f(t.w1.flat());
    f(std::span(t.b1));
    f(t.w2.flat());
    f(std::span(t.b2));
}

std::size_t parameter_count(StudentShape shape) noexcept;
Vector flatten(const StudentParams& p);
Vector flatten(const StudentGrads& g);
/// Throws InvalidInput when flat.size() does not match the shape.
void unflatten(std::span<const double> flat, StudentParams& p);
double l2_norm(const StudentParams& p);

struct DropoutMask {
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> keep;

    /// Each unit kept with probability 1 - rate; fully determined by seed.
    static DropoutMask draw(std::uint64_t seed, std::size_t hidden, double rate);
};

struct ForwardCache {
    Vector input;
    Vector pre;      // W1^T x + b1
    Vector hidden;   // dropout(gelu(pre))
    const DropoutMask* mask = nullptr;
    double keep_scale = 1.0;
};

struct ForwardPass {
    Vector logits;
    ForwardCache cache;
};

/// mask == nullptr is evaluation mode. Throws InvalidInput on shape mismatch.
ForwardPass forward(const StudentParams& params, std::span<const double> x, const DropoutMask* mask);
/// Buffer-reusing variant; out's cache keeps a pointer to mask.
void forward_into(const StudentParams& params, std::span<const double> x, const DropoutMask* mask, ForwardPass& out);

/// Back-propagates dlogits through a cached pass. Adds weight * dθ into grads when
/// grads != nullptr and writes dL/dx into dx when dx is non-empty.
void backward(const StudentParams& params, const ForwardPass& pass, std::span<const double> dlogits, double weight,
              StudentGrads* grads, std::span<double> dx);

/// K softmax outputs, each under a fresh mask whose seed is drawn from rng.
std::vector<ProbVector> mc_forward(const StudentParams& params, std::span<const double> x, std::size_t passes,
                                   RngStream& rng);

enum class LossKind { cross_entropy, entropy };

/// Per-sample helpers on softmax outputs. Return the loss and write dloss/dlogits.
double cross_entropy_logit_grad(std::span<const double> probs, std::size_t y, std::span<double> dlogits) noexcept;
double entropy_logit_grad(std::span<const double> probs, std::span<double> dlogits) noexcept;

struct LossAndGrads {
    double loss = 0.0;
    StudentGrads grads;
};

/// loss = (1/N) sum_i w_i * l_i over the rows of inputs. masks is empty (eval
/// mode) or one per row; weights is empty (all 1) or one per row; targets is
/// ignored for LossKind::entropy. Throws InvalidInput on an empty batch.
LossAndGrads loss_and_grads(const StudentParams& params, const DenseMatrix& inputs, std::span<const int> targets,
                            LossKind kind, std::span<const DropoutMask> masks, std::span<const double> weights = {});

/// Mean loss only (no gradient); same conventions as loss_and_grads.
double batch_loss(const StudentParams& params, const DenseMatrix& inputs, std::span<const int> targets, LossKind kind,
                  std::span<const DropoutMask> masks, std::span<const double> weights = {});

struct OptimizerState {
    StudentGrads velocity;
    double momentum = 0.9;
    double base_lr = 0.03;
    std::size_t step = 0;
    std::size_t total_steps = 1;
    std::optional<double> norm_bound;

    static OptimizerState make(StudentShape shape, double base_lr, double momentum, std::size_t total_steps);

    /// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), step clamped to total_steps.
    double learning_rate() const noexcept;
};

/// v <- m v + g; theta <- theta - lr(step) v; step += 1; then optional projection
/// onto the l2 ball of radius norm_bound.
void sgd_step(StudentParams& params, const StudentGrads& grads, OptimizerState& opt);

}  // namespace trico

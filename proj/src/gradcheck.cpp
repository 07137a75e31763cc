#include "trico/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "trico/generator.hpp"
#include "trico/student.hpp"
#include "trico/teacher.hpp"

namespace trico {
namespace {

constexpr double kH = 1e-5;

double rel_error(std::span<const double> a, std::span<const double> n) {
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - n[i]));
    return diff / std::max({norm_inf(a), norm_inf(n), 1e-6});
}

struct Toy {
    std::mt19937_64 gen;

    explicit Toy(std::uint64_t seed) : gen(seed) {}

    std::size_t pick(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(gen); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }

    StudentShape shape() { return {pick(2, 6), pick(2, 8), pick(2, 5)}; }

    StudentParams student(StudentShape s) {
        auto p = StudentParams::init(s, uniform(0.1, 0.5), gen());
        // Nonzero biases so the check covers them away from the init point.
        for (double& b : p.b1) b = uniform(-0.5, 0.5);
        for (double& b : p.b2) b = uniform(-0.5, 0.5);
        return p;
    }

    DenseMatrix rows(std::size_t n, std::size_t d) {
        DenseMatrix m(n, d);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& v : m.flat()) v = normal(gen);
        return m;
    }

    std::vector<int> labels(std::size_t n, std::size_t classes) {
        std::vector<int> y(n);
        for (int& v : y) v = static_cast<int>(pick(0, classes - 1));
        return y;
    }

    std::vector<DropoutMask> masks(std::size_t n, const StudentParams& p) {
        std::vector<DropoutMask> m;
        for (std::size_t i = 0; i < n; ++i) m.push_back(DropoutMask::draw(gen(), p.shape().hidden, p.dropout_rate));
        return m;
    }
};

}  // namespace

GradCheckResult check_student_gradients(std::size_t instances, std::uint64_t seed) {
    GradCheckResult r{"student", instances, 0.0, 1e-5};
    Toy toy(seed);
    for (std::size_t it = 0; it < instances; ++it) {
        const StudentShape s = toy.shape();
        const StudentParams p = toy.student(s);
        const std::size_t n = toy.pick(1, 4);
        const DenseMatrix x = toy.rows(n, s.d_in);
        const auto y = toy.labels(n, s.classes);
        const LossKind kind = it % 2 ? LossKind::entropy : LossKind::cross_entropy;
        const auto masks = it % 3 ? toy.masks(n, p) : std::vector<DropoutMask>{};
        std::vector<double> weights;
        if (it % 4 == 1)
            for (std::size_t i = 0; i < n; ++i) weights.push_back(toy.uniform(0.0, 1.0));

        const Vector analytic = flatten(loss_and_grads(p, x, y, kind, masks, weights).grads);
        StudentParams q = p;
        const Vector numeric = finite_diff_grad(
            [&](std::span<const double> theta) {
                unflatten(theta, q);
                return batch_loss(q, x, y, kind, masks, weights);
            },
            flatten(p), kH);
        r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic, numeric));
    }
    return r;
}

GradCheckResult check_generator_gradients(std::size_t instances, std::uint64_t seed) {
    GradCheckResult r{"generator", instances, 0.0, 1e-5};
    Toy toy(seed);
    for (std::size_t it = 0; it < instances; ++it) {
        const StudentShape s = toy.shape();
        const StudentParams p = toy.student(s);
        const DenseMatrix xm = toy.rows(2, s.d_in);
        const auto x = xm.row(0);
        const Vector delta0(xm.row(1).begin(), xm.row(1).end());
        const double gamma = it % 2 ? toy.uniform(0.1, 2.0) : 0.0;
        const auto masks = toy.masks(toy.pick(2, 5), p);

        auto objective = [&](std::span<const double> d, std::span<double> grad) {
            double v = entropy_input_gradient(p, x, d, grad);
            if (gamma > 0.0) {
                Vector gm(d.size());
                v += gamma * mi_input_gradient(p, x, d, masks, gm);
                for (std::size_t j = 0; j < d.size(); ++j) grad[j] += gamma * gm[j];
            }
            return v;
        };
        Vector analytic(s.d_in);
        objective(delta0, analytic);
        Vector scratch(s.d_in);
        const Vector numeric =
            finite_diff_grad([&](std::span<const double> d) { return objective(d, scratch); }, delta0, kH);
        r.max_rel_error = std::max(r.max_rel_error, rel_error(analytic, numeric));
    }
    return r;
}

GradCheckResult check_meta_gradients(std::size_t instances, std::uint64_t seed) {
    GradCheckResult r{"meta", instances, 0.0, 1e-4};
    Toy toy(seed);
    for (std::size_t it = 0; it < instances; ++it) {
        const std::size_t classes = toy.pick(2, 4);
        std::vector<StudentParams> students;
        std::vector<ViewMetaBatch> batches;
        for (std::size_t v = 0; v < 2; ++v) {
            StudentShape s = toy.shape();
            s.classes = classes;
            students.push_back(toy.student(s));
            const StudentParams& p = students.back();
            ViewMetaBatch b;
            const std::size_t nu = toy.pick(2, 6);
            b.unlabeled = toy.rows(nu, s.d_in);
            b.pseudo_labels = toy.labels(nu, classes);
            for (std::size_t i = 0; i < nu; ++i) b.source_mi.push_back(toy.uniform(0.0, 0.4));
            b.direction = it % 2 ? FilterDirection::below : FilterDirection::above;
            b.unsup_masks = toy.masks(nu, p);
            if (it % 3) {
                b.perturbed = toy.rows(toy.pick(1, 4), s.d_in);
                b.adv_masks = toy.masks(b.perturbed.rows(), p);
            }
            const std::size_t nv = toy.pick(1, 4);
            b.validation = toy.rows(nv, s.d_in);
            b.validation_labels = toy.labels(nv, classes);
            batches.push_back(std::move(b));
        }
        TeacherStrategy t;
        for (double& z : t.z) z = toy.uniform(-2.0, 2.0);
        t.gate_temperature = toy.uniform(0.05, 0.3);
        const double eta = toy.uniform(0.05, 0.5);

        const MetaGradient mg = meta_grad(t, students, batches, eta);
        const Vector numeric = finite_diff_grad(
            [&](std::span<const double> z) {
                return unrolled_validation_loss({z[0], z[1], z[2]}, t.gate_temperature, students, batches, eta);
            },
            std::span<const double>(t.z), kH);
        r.max_rel_error = std::max(r.max_rel_error, rel_error(mg.dz, numeric));
    }
    return r;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::size_t instances) {
    return {check_student_gradients(instances), check_generator_gradients(instances), check_meta_gradients(instances)};
}

}  // namespace trico

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "trico/error.hpp"
#include "trico/generator.hpp"
#include "trico/gradcheck.hpp"
#include "trico/rng.hpp"
#include "trico/uncertainty.hpp"

using namespace trico;

namespace {

// Hidden units pinned deep in GELU's linear regime: logits are affine in x,
// i.e. a linear-softmax classifier.
StudentParams linear_model(std::size_t d, std::size_t c, std::uint64_t seed) {
    auto p = StudentParams::init({d, 8, c}, 0.1, seed);
    for (double& b : p.b1) b = 40.0;
    return p;
}

Vector random_x(std::size_t d, std::mt19937_64& g, double s = 1.0) {
    std::normal_distribution<double> nd(0.0, s);
    Vector x(d);
    for (double& v : x) v = nd(g);
    return x;
}

double eval_entropy(const StudentParams& p, std::span<const double> x, std::span<const double> delta) {
    Vector xp(x.begin(), x.end());
    for (std::size_t i = 0; i < xp.size(); ++i) xp[i] += delta[i];
    return entropy(softmax(forward(p, xp, nullptr).logits));
}

}  // namespace

TEST(ProjectLinf, ClampAndIdempotence) {
    EXPECT_EQ(project_linf(std::vector<double>{2, -3}, 1.0), (Vector{1, -1}));
    const Vector inside{0.2, -0.5, 0.99};
    EXPECT_EQ(project_linf(inside, 1.0), inside);
    std::mt19937_64 g(1);
    for (int t = 0; t < 200; ++t) {
        const Vector d = random_x(6, g, 2.0);
        const Vector p = project_linf(d, 0.7);
        EXPECT_EQ(project_linf(p, 0.7), p);
        // separable box projection: each coordinate is the closest point of [-eps, eps]
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double best = std::abs(d[i]) <= 0.7 ? d[i] : std::copysign(0.7, d[i]);
            EXPECT_EQ(p[i], best);
        }
    }
}

TEST(PerturbObjective, UniformNetIsLogC) {
    const auto p = StudentParams::zeros({4, 5, 3}, 0.1);
    PerturbConfig cfg = PerturbConfig::fgsm(1.0);
    RngStream rng(1);
    std::mt19937_64 g(2);
    const Vector x = random_x(4, g);
    for (int t = 0; t < 5; ++t)
        EXPECT_NEAR(perturb_objective(p, x, random_x(4, g), cfg, rng), std::log(3.0), 1e-15);
}

TEST(PerturbObjective, GammaZeroIsEvalEntropy) {
    const auto p = StudentParams::init({4, 5, 3}, 0.2, 3);
    std::mt19937_64 g(4);
    const Vector x = random_x(4, g), d = random_x(4, g, 0.1);
    RngStream rng(1);
    EXPECT_EQ(perturb_objective(p, x, d, PerturbConfig::fgsm(1.0), rng), eval_entropy(p, x, d));
}

TEST(PerturbObjective, GammaTermRecomputesFromParts) {
    const auto p = StudentParams::init({4, 5, 3}, 0.3, 3);
    std::mt19937_64 g(4);
    const Vector x = random_x(4, g), d = random_x(4, g, 0.1);
    PerturbConfig cfg = PerturbConfig::fgsm(1.0);
    cfg.gamma = 0.5;
    RngStream a(77), b(77), c(77);
    const double v = perturb_objective(p, x, d, cfg, a);
    EXPECT_EQ(v, perturb_objective(p, x, d, cfg, b));
    Vector xp = x;
    for (std::size_t i = 0; i < 4; ++i) xp[i] += d[i];
    const double parts = eval_entropy(p, x, d) + 0.5 * mutual_information(mc_forward(p, xp, cfg.mi_passes, c)).mi;
    EXPECT_NEAR(v, parts, 1e-15);
}

TEST(Pgd, BudgetInvariantAcrossConfigs) {
    std::mt19937_64 g(5);
    for (int t = 0; t < 300; ++t) {
        const auto p = StudentParams::init({5, 6, 3}, 0.2, t);
        const Vector x = random_x(5, g);
        PerturbConfig cfg{0.05 + 0.01 * (t % 20), (t % 3) * 0.5, static_cast<std::size_t>(1 + t % 12), 0.03, 3};
        RngStream rng(t);
        const auto r = pgd_perturb(p, x, cfg, rng);
        EXPECT_LE(norm_inf(r.delta), cfg.epsilon + 1e-12);
    }
}

TEST(Pgd, FgsmIsEpsilonTimesSignBitExact) {
    std::mt19937_64 g(6);
    for (int t = 0; t < 100; ++t) {
        const auto p = StudentParams::init({5, 6, 3}, 0.2, 100 + t);
        const Vector x = random_x(5, g);
        Vector grad(5);
        entropy_input_gradient(p, x, Vector(5, 0.0), grad);
        RngStream rng(1);
        const auto r = pgd_perturb(p, x, PerturbConfig::fgsm(0.37), rng);
        for (std::size_t i = 0; i < 5; ++i) {
            ASSERT_NE(grad[i], 0.0);
            EXPECT_EQ(r.delta[i], grad[i] > 0 ? 0.37 : -0.37);
        }
    }
}

TEST(Pgd, ZeroGradientIsFlagged) {
    const auto p = StudentParams::zeros({4, 5, 3}, 0.1);
    RngStream rng(1);
    const auto r = pgd_perturb(p, Vector(4, 0.5), PerturbConfig::fgsm(1.0), rng);
    EXPECT_TRUE(r.zero_gradient);
    EXPECT_EQ(r.delta, Vector(4, 0.0));
    EXPECT_EQ(r.fixed_point_residual, 0.0);
}

TEST(Pgd, SmallStepRaisesEntropyOnLinearModel) {
    std::mt19937_64 g(7);
    for (int t = 0; t < 200; ++t) {
        const auto p = linear_model(4, 3, t);
        const Vector x = random_x(4, g);
        RngStream rng(1);
        const auto r = pgd_perturb(p, x, PerturbConfig::fgsm(1e-4), rng);
        if (r.zero_gradient) continue;
        EXPECT_GT(eval_entropy(p, x, r.delta), eval_entropy(p, x, Vector(4, 0.0)));
    }
}

TEST(Pgd, ObjectiveNonDecreasingWithSmallSteps) {
    std::mt19937_64 g(8);
    for (int t = 0; t < 100; ++t) {
        const auto p = linear_model(4, 3, 50 + t);
        const Vector x = random_x(4, g);
        const double eps = 0.05;
        PerturbConfig cfg{eps, 0.0, 10, 0.1 * eps, 5};
        RngStream rng(1);
        PgdOptions opts;
        opts.record_trace = true;
        const auto r = pgd_perturb(p, x, cfg, rng, opts);
        for (std::size_t k = 1; k < r.objective_trace.size(); ++k)
            EXPECT_GE(r.objective_trace[k], r.objective_trace[k - 1] - 1e-12) << "instance " << t << " step " << k;
    }
}

TEST(FixedPoint, CornerWithOutwardGradientIsZero) {
    const auto p = linear_model(3, 3, 9);
    std::mt19937_64 g(10);
    const Vector x = random_x(3, g);
    Vector grad(3);
    entropy_input_gradient(p, x, Vector(3, 0.0), grad);
    // a tiny box around 0: the gradient barely changes, so the signed corner is outward on every coordinate
    const double eps = 1e-6;
    Vector corner(3);
    for (std::size_t i = 0; i < 3; ++i) corner[i] = grad[i] > 0 ? eps : -eps;
    EXPECT_EQ(fixed_point_residual(p, x, corner, PerturbConfig{eps, 0.0, 1, eps, 5}), 0.0);
}

TEST(FixedPoint, StationaryPointAndBallCheck) {
    const auto p = StudentParams::zeros({3, 4, 2}, 0.1);
    const Vector x{0.1, 0.2, 0.3};
    EXPECT_EQ(fixed_point_residual(p, x, Vector{0.2, -0.1, 0.0}, PerturbConfig::fgsm(1.0)), 0.0);
    EXPECT_THROW(fixed_point_residual(p, x, Vector{2.0, 0.0, 0.0}, PerturbConfig::fgsm(1.0)), InvalidInput);
}

TEST(FixedPoint, Pgd50ConvergesOnToyModel) {
    std::mt19937_64 g(11);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
        const auto p = StudentParams::init({3, 4, 3}, 0.1, 500 + t);
        const Vector x = random_x(3, g);
        const double eps = 0.1;
        RngStream rng(1);
        worst = std::max(worst, pgd_perturb(p, x, PerturbConfig{eps, 0.0, 50, eps / 10, 5}, rng).fixed_point_residual);
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(EntropyGradient, MatchesFiniteDifferences) {
    const auto r = check_generator_gradients(100, 99);
    EXPECT_TRUE(r.passed()) << r.max_rel_error;
}

TEST(PerturbConfigType, Validation) {
    EXPECT_THROW((PerturbConfig{0.0, 0.0, 1, 1.0, 5}).validate(), InvalidInput);
    EXPECT_THROW((PerturbConfig{1.0, 0.0, 0, 1.0, 5}).validate(), InvalidInput);
    EXPECT_THROW((PerturbConfig{1.0, 0.0, 1, 0.0, 5}).validate(), InvalidInput);
    EXPECT_THROW((PerturbConfig{1.0, -1.0, 1, 1.0, 5}).validate(), InvalidInput);
    EXPECT_NO_THROW(PerturbConfig::fgsm(1.0).validate());
}

TEST(RobustAttack, StaysInBall) {
    const auto p = StudentParams::init({4, 6, 3}, 0.1, 4);
    std::mt19937_64 g(12);
    for (int t = 0; t < 50; ++t) {
        const Vector x = random_x(4, g);
        const auto d = pgd_attack_cross_entropy(p, x, t % 3, PerturbConfig{0.3, 0.0, 10, 0.075, 5});
        EXPECT_LE(norm_inf(d), 0.3 + 1e-12);
    }
}

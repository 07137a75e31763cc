#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "trico/error.hpp"
#include "trico/rng.hpp"
#include "trico/student.hpp"
#include "trico/uncertainty.hpp"

using namespace trico;

namespace {

ProbVector random_prob(std::size_t c, std::mt19937_64& g) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector w(c);
    double s = 0;
    for (double& v : w) s += (v = u(g) * u(g) * u(g));
    for (double& v : w) v /= s;
    return ProbVector(w);
}

UncertaintyEstimate with_mi(double mi) {
    UncertaintyEstimate e{ProbVector({0.5, 0.5})};
    e.mi = mi;
    return e;
}

}  // namespace

TEST(PredictiveMean, Basics) {
    const ProbVector a({0.2, 0.8});
    const std::vector<ProbVector> same{a, a, a};
    EXPECT_EQ(predictive_mean(same).values()[0], 0.2);
    const std::vector<ProbVector> opp{ProbVector({1, 0}), ProbVector({0, 1})};
    EXPECT_EQ(predictive_mean(opp), ProbVector({0.5, 0.5}));
    EXPECT_THROW(predictive_mean(std::vector<ProbVector>{}), InvalidInput);
    const std::vector<ProbVector> ragged{ProbVector({1, 0}), ProbVector({0, 0, 1})};
    EXPECT_THROW(predictive_mean(ragged), InvalidInput);
}

TEST(PredictiveMean, MatchesExtendedPrecision) {
    std::mt19937_64 g(1);
    std::vector<ProbVector> s;
    for (int k = 0; k < 5; ++k) s.push_back(random_prob(4, g));
    const auto m = predictive_mean(s);
    for (std::size_t c = 0; c < 4; ++c) {
        long double acc = 0;
        for (const auto& p : s) acc += p[c];
        EXPECT_NEAR(m[c], static_cast<double>(acc / 5), 1e-16);
    }
}

TEST(MutualInformation, IdenticalSamplesGiveZero) {
    std::mt19937_64 g(2);
    const auto p = random_prob(4, g);
    const std::vector<ProbVector> s(5, p);
    EXPECT_NEAR(mutual_information(s).mi, 0.0, 1e-12);
}

TEST(MutualInformation, MaximalDisagreementIsLn2) {
    const std::vector<ProbVector> s{ProbVector({1, 0}), ProbVector({0, 1})};
    const auto e = mutual_information(s);
    EXPECT_NEAR(e.mi, std::log(2.0), 1e-12);
    EXPECT_NEAR(e.predictive_entropy, std::log(2.0), 1e-12);
    EXPECT_EQ(e.expected_entropy, 0.0);
    EXPECT_EQ(e.pseudo_label, 0u);  // tie goes to the lowest index
}

TEST(MutualInformation, MatchesExtendedPrecisionFormula) {
    std::mt19937_64 g(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<ProbVector> s;
        for (int k = 0; k < 5; ++k) s.push_back(random_prob(4, g));
        long double mean[4] = {0, 0, 0, 0}, exp_h = 0;
        for (const auto& p : s) {
            long double h = 0;
            for (std::size_t c = 0; c < 4; ++c) {
                mean[c] += p[c] / 5.0L;
                if (p[c] > 0) h -= p[c] * std::log(static_cast<long double>(p[c]));
            }
            exp_h += h / 5.0L;
        }
        long double ph = 0;
        for (long double m : mean)
            if (m > 0) ph -= m * std::log(m);
        const auto e = mutual_information(s);
        EXPECT_NEAR(e.mi, static_cast<double>(ph - exp_h), 1e-13);
        EXPECT_NEAR(e.mi, e.predictive_entropy - e.expected_entropy, 1e-15);
    }
}

TEST(MutualInformation, BoundedOnRandomSampleSets) {
    std::mt19937_64 g(4);
    for (int t = 0; t < 10000; ++t) {
        const std::size_t c = 2 + t % 5, k = 1 + t % 7;
        std::vector<ProbVector> s;
        for (std::size_t i = 0; i < k; ++i) s.push_back(random_prob(c, g));
        const auto e = mutual_information(s);
        ASSERT_GE(e.mi, 0.0);
        ASSERT_LE(e.mi, std::log(static_cast<double>(c)) + 1e-12);
        ASSERT_GE(e.predictive_entropy, e.expected_entropy - 1e-9);
    }
}

TEST(MutualInformation, ZeroDropoutCollapse) {
    const auto p = StudentParams::init({4, 6, 3}, 0.0, 1);
    const std::vector<double> x{0.3, -1.0, 2.0, 0.5};
    RngStream rng(9);
    EXPECT_NEAR(mutual_information(mc_forward(p, x, 5, rng)).mi, 0.0, 1e-12);
}

TEST(MiFilter, MatchesBruteForce) {
    std::mt19937_64 g(5);
    std::uniform_real_distribution<double> u(0.0, 0.3);
    std::vector<UncertaintyEstimate> est;
    for (int i = 0; i < 200; ++i) est.push_back(with_mi(i % 17 == 0 ? 0.1 : u(g)));
    for (auto dir : {FilterDirection::above, FilterDirection::below}) {
        const auto r = mi_filter(est, 0.1, dir);
        std::vector<std::size_t> want;
        for (std::size_t i = 0; i < est.size(); ++i)
            if (dir == FilterDirection::above ? est[i].mi > 0.1 : est[i].mi < 0.1) want.push_back(i);
        EXPECT_EQ(r.accepted, want);
        EXPECT_DOUBLE_EQ(r.mask_rate, 1.0 - static_cast<double>(want.size()) / 200.0);
    }
}

TEST(MiFilter, TauZeroAcceptsPositiveMi) {
    const std::vector<UncertaintyEstimate> est{with_mi(0.0), with_mi(1e-9), with_mi(0.2)};
    EXPECT_EQ(mi_filter(est, 0.0, FilterDirection::above).accepted, (std::vector<std::size_t>{1, 2}));
}

TEST(MiFilter, RaisingTauShrinksAcceptedSet) {
    std::mt19937_64 g(6);
    std::uniform_real_distribution<double> u(0.0, 0.5);
    std::vector<UncertaintyEstimate> est;
    for (int i = 0; i < 100; ++i) est.push_back(with_mi(u(g)));
    auto prev = mi_filter(est, 0.0, FilterDirection::above).accepted;
    for (double tau = 0.05; tau <= 0.5; tau += 0.05) {
        const auto cur = mi_filter(est, tau, FilterDirection::above).accepted;
        EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
        prev = cur;
    }
}

TEST(MiFilter, EmptyInput) {
    const auto r = mi_filter(std::vector<UncertaintyEstimate>{}, 0.1, FilterDirection::above);
    EXPECT_TRUE(r.accepted.empty());
    EXPECT_EQ(r.mask_rate, 0.0);
}

TEST(ConfidenceFilter, Thresholds) {
    std::vector<UncertaintyEstimate> est;
    est.push_back({ProbVector({0.25, 0.25, 0.25, 0.25})});
    est.push_back({ProbVector({0.0, 1.0, 0.0, 0.0})});
    est.push_back({ProbVector({0.96, 0.04, 0.0, 0.0})});
    EXPECT_EQ(confidence_filter(est, 0.5).accepted, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(confidence_filter(est, 0.95).accepted, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(confidence_filter(est, 0.99).accepted, (std::vector<std::size_t>{1}));
    EXPECT_EQ(confidence_filter(est, 1.0).accepted, (std::vector<std::size_t>{1}));
}

TEST(Impurity, CountsMismatchesAmongAccepted) {
    const std::vector<std::size_t> accepted{0, 2, 3};
    const std::vector<std::size_t> pseudo{1, 0, 2, 3};
    const std::vector<int> truth{1, 1, 0, 0};
    EXPECT_DOUBLE_EQ(*impurity(accepted, pseudo, truth), 2.0 / 3.0);
    EXPECT_FALSE(impurity(std::vector<std::size_t>{}, pseudo, truth).has_value());
}

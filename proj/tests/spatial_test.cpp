#include "ncl/spatial.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace ncl {
namespace {

TEST(Grid, ElevenNodesOnUnitInterval) {
    const auto g = make_grid(0.0, 1.0, 11);
    EXPECT_NEAR(g->spacing(), 0.1, 1e-15);
    EXPECT_NEAR(g->weights().sum(), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(g->weight(0), 0.05);
    EXPECT_DOUBLE_EQ(g->node(10), 1.0);
}

TEST(Grid, MinimumNodeCount) {
    EXPECT_NO_THROW(make_grid(0.0, 1.0, 8));
    EXPECT_THROW(make_grid(0.0, 1.0, 5), InvalidArgument);
    EXPECT_THROW(make_grid(1.0, 1.0, 20), InvalidArgument);
    EXPECT_THROW(make_grid(2.0, 1.0, 20), InvalidArgument);
}

TEST(Grid, NodesIncreasingAndWeightsSumToLength) {
    for (std::size_t n : {8u, 9u, 100u, 401u}) {
        const auto g = make_grid(-0.3, 2.2, n);
        for (std::size_t i = 1; i < n; ++i) EXPECT_LT(g->node(i - 1), g->node(i));
        EXPECT_NEAR(g->weights().sum() / g->length(), 1.0, 1e-12);
        EXPECT_GT(g->weights().minCoeff(), 0.0);
    }
}

TEST(ScalarField, RejectsBadValues) {
    const auto g = make_grid(0.0, 1.0, 10);
    EXPECT_THROW(ScalarField(g, Eigen::VectorXd::Ones(9)), InvalidArgument);
    Eigen::VectorXd bad = Eigen::VectorXd::Ones(10);
    bad[3] = std::nan("");
    EXPECT_THROW(ScalarField(g, bad), InvalidArgument);
    Eigen::VectorXd neg = Eigen::VectorXd::Ones(10);
    neg[0] = -1e-3;
    EXPECT_NO_THROW(ScalarField(g, neg, FieldTag::rate));
    EXPECT_THROW(ScalarField(g, neg, FieldTag::density), InvalidArgument);
}

TEST(Integrate, ConstantAndAffineAreExact) {
    const auto g = make_grid(0.0, 1.0, 17);
    EXPECT_NEAR(integrate(ScalarField::constant(g, 1.0)), 1.0, 1e-14);
    const auto g101 = make_grid(0.0, 1.0, 101);
    EXPECT_NEAR(integrate(ScalarField::sample(g101, [](double x) { return x; })), 0.5, 1e-12);
}

TEST(Integrate, SecondOrderConvergenceOnQuadratic) {
    auto err = [](std::size_t n) {
        const auto g = make_grid(0.0, 1.0, n);
        return std::abs(integrate(ScalarField::sample(g, [](double x) { return x * x; })) - 1.0 / 3.0);
    };
    // 11 -> 21 nodes halves h.
    const double ratio = err(11) / err(21);
    EXPECT_NEAR(ratio, 4.0, 0.05);
    EXPECT_NEAR(err(41) * 4.0, err(21), 1e-12);
}

TEST(Integrate, LinearAndPositive) {
    std::mt19937_64 rng(7);
    const auto g = make_grid(0.0, 3.0, 57);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = testing::random_signed(g, rng);
        const auto h = testing::random_signed(g, rng);
        std::uniform_real_distribution<double> coef(-3.0, 3.0);
        const double a = coef(rng), b = coef(rng);
        const ScalarField combo(g, a * f.values() + b * h.values());
        EXPECT_NEAR(integrate(combo), a * integrate(f) + b * integrate(h), 1e-13);
        const auto p = testing::random_positive(g, rng, 0.0, 1.0);
        EXPECT_GE(integrate(p), 0.0);
    }
}

TEST(PairwiseSum, MatchesNaiveAndIsOrderRobust) {
    std::vector<double> v;
    for (int i = 0; i < 1000; ++i) v.push_back(1.0 / (1.0 + i));
    double naive = 0.0;
    for (double x : v) naive += x;
    EXPECT_NEAR(pairwise_sum(v), naive, 1e-12);
}

}  // namespace
}  // namespace ncl

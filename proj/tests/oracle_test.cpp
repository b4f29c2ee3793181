#include "ncl/oracle.hpp"

#include "ncl/single_species.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace ncl {
namespace {

using testing::gaussian_operator;
using testing::random_positive;

TEST(Symmetrization, EqualFieldsGiveZero) {
    const auto g = make_grid(0.0, 1.0, 40);
    const auto k = build_kernel_matrix(KernelSpec::gaussian(0.1), g);
    std::mt19937_64 rng(1);
    const auto u = random_positive(g, rng);
    const OracleReport r = symmetrization_identity(*k, 1.0, u, u);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_EQ(r.rhs, 0.0);
    EXPECT_TRUE(r.passed());
}

TEST(Symmetrization, OrderedPairsHoldSign) {
    const auto g = make_grid(0.0, 1.0, 60);
    const auto k = build_kernel_matrix(KernelSpec::gaussian(0.15), g);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const auto lo = random_positive(g, rng, 0.1, 1.0);
        const auto bump = random_positive(g, rng, 0.01, 1.0);
        const ScalarField hi(g, lo.values() + bump.values());
        const OracleReport a = symmetrization_identity(*k, 0.7, hi, lo);
        EXPECT_EQ(a.sign_claim, SignClaim::nonpositive);
        EXPECT_LE(std::abs(a.difference), 1e-12 * a.scale);
        EXPECT_LE(a.rhs, 0.0);
        EXPECT_TRUE(a.passed());
        const OracleReport b = symmetrization_identity(*k, 0.7, lo, hi);
        EXPECT_EQ(b.sign_claim, SignClaim::nonnegative);
        EXPECT_GE(b.rhs, 0.0);
        EXPECT_TRUE(b.passed());
    }
}

TEST(Symmetrization, UnorderedPairsStillAgree) {
    const auto g = make_grid(0.0, 1.0, 60);
    const auto k = build_kernel_matrix(KernelSpec::gaussian(0.1), g);
    std::mt19937_64 rng(3);
    const auto u = random_positive(g, rng);
    const auto s = random_positive(g, rng);
    const OracleReport r = symmetrization_identity(*k, 1.0, u, s);
    EXPECT_EQ(r.sign_claim, SignClaim::none);
    EXPECT_LE(std::abs(r.difference), 1e-12 * r.scale);
}

TEST(Symmetrization, RejectsNonpositive) {
    const auto g = make_grid(0.0, 1.0, 20);
    const auto k = build_kernel_matrix(KernelSpec::gaussian(0.1), g);
    const auto one = ScalarField::constant(g, 1.0);
    const auto zero = ScalarField::constant(g, 0.0);
    EXPECT_THROW(symmetrization_identity(*k, 1.0, one, zero), InvalidArgument);
}

TEST(SignFunctional, ClosedForm) {
    const auto g = make_grid(0.0, 1.0, 30);
    auto k = [&](double v) { return ScalarField::constant(g, v); };
    // w = 1, z = -1: (1 - 0.5) * 1 and (0.5 - 1) * 1.
    const SignFunctionals f = sign_functional_W(k(2.0), k(1.0), k(0.0), k(1.0), k(1.0), k(0.5), k(0.5), k(1.0));
    EXPECT_NEAR(f.w_u, 0.5, 1e-14);
    EXPECT_NEAR(f.w_v, -0.5, 1e-14);
    const SignFunctionals z = sign_functional_W(k(1.0), k(1.0), k(2.0), k(2.0), k(1.0), k(0.5), k(0.5), k(1.0));
    EXPECT_EQ(z.w_u, 0.0);
    EXPECT_EQ(z.w_v, 0.0);
}

TEST(KeyRelation, Examples) {
    const auto g = make_grid(0.0, 2.0, 30);
    const auto z = ScalarField::sample(g, [](double x) { return std::sin(3 * x); });
    const ScalarField w(g, -0.7 * z.values());
    EXPECT_NEAR(key_relation(w, z, 1.0, 0.7), 0.0, 1e-15);
    EXPECT_NEAR(key_relation(ScalarField::constant(g, 1.0), ScalarField::constant(g, 0.0), 0.3, 3.0), -2.0, 1e-14);
    EXPECT_THROW(key_relation(w, z, 2.0, 1.0), InvalidArgument);
}

TEST(NeutralFunctionals, ExactMatchGivesZeroKey) {
    const auto g = make_grid(0.0, 1.0, 40);
    const auto u = testing::cosine_profile(g);
    const ScalarField v(g, 0.8 * u.values());
    const NeutralFunctionals nf = neutral_case_functionals(u, v, 0.8, 1.25);
    EXPECT_NEAR(nf.ikey, 0.0, 1e-14);
    EXPECT_TRUE(nf.chain_holds);
}

TEST(NeutralFunctionals, ChainOnRandomProfiles) {
    const auto g = make_grid(0.0, 1.0, 40);
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const auto u = random_positive(g, rng);
        const auto v = random_positive(g, rng);
        // The chain is algebraic: b^3 I2 + I1 - Ikey = (1 - bc) b^3 int v u^2 ... >= 0.
        EXPECT_TRUE(neutral_case_functionals(u, v, 0.7, 1.0).chain_holds);
        EXPECT_TRUE(neutral_case_functionals(u, v, 1.0, 1.0).chain_holds);
    }
}

double mixed_error(std::size_t n) {
    const auto g = make_grid(0.0, 1.0, n);
    const auto op = gaussian_operator(g, 0.1, 1.0, DispersalKind::mixed, 0.5);
    const auto uh = ScalarField::sample(g, [](double x) { return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * x); });
    const auto u = ScalarField::sample(g, [&](double x) {
        return (1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * x)) * (1.0 + 0.1 * x);
    });
    const OracleReport r = mixed_quadratic_form(*op, u, uh);
    EXPECT_EQ(r.sign_claim, SignClaim::nonpositive);
    EXPECT_LE(r.rhs, 0.0);
    EXPECT_TRUE(r.passed()) << n << " diff " << r.difference << " scale " << r.scale;
    return std::abs(r.difference);
}

TEST(MixedQuadraticForm, SecondOrderAgreement) {
    // Below n ~ 160 two error contributions of opposite sign partly cancel.
    const double e1 = mixed_error(161);
    const double e2 = mixed_error(321);
    EXPECT_GT(e1 / e2, 3.0);
    EXPECT_LT(e1 / e2, 5.0);
}

TEST(MixedQuadraticForm, PureNonlocalIsExact) {
    const auto g = make_grid(0.0, 1.0, 40);
    const auto op = gaussian_operator(g, 0.1, 1.0, DispersalKind::mixed, 1.0);
    std::mt19937_64 rng(8);
    const auto u = random_positive(g, rng);
    const auto v = random_positive(g, rng);
    const OracleReport r = mixed_quadratic_form(*op, u, v);
    EXPECT_LE(std::abs(r.difference), 1e-12 * r.scale);
}

}  // namespace
}  // namespace ncl

#include "ncl/single_species.hpp"
#include "ncl/spectral.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace ncl {
namespace {

using testing::cosine_profile;
using testing::gaussian_operator;

TEST(SpectralBound, ConstantPotentialGivesConstantEigenfunction) {
    const auto g = make_grid(0.0, 1.0, 60);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    const auto r = spectral_bound(*op, ScalarField::constant(g, 0.37));
    EXPECT_EQ(r.method, SpectralMethod::rayleigh_symmetric);
    EXPECT_NEAR(r.lambda, 0.37, 1e-12);
    EXPECT_NEAR(r.eigenfunction.min(), 1.0, 1e-10);
    EXPECT_NEAR(r.eigenfunction.max(), 1.0, 1e-12);
}

TEST(SpectralBound, AtLeastMeanPotential) {
    const auto g = make_grid(0.0, 1.0, 60);
    std::mt19937_64 rng(21);
    for (int t = 0; t < 20; ++t) {
        const auto op = gaussian_operator(g, 0.05 + 0.01 * t, 0.5 + 0.1 * t);
        const auto v = testing::random_signed(g, rng, 2.0);
        EXPECT_GE(spectral_bound(*op, v).lambda, integrate(v) / g->length() - 1e-12);
    }
}

TEST(SpectralBound, RayleighAndPerronAgree) {
    const auto g = make_grid(0.0, 1.0, 50);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    const auto m = cosine_profile(g);
    const auto a = rayleigh_symmetric(*op, m);
    const auto b = perron_power(*op, m);
    EXPECT_NEAR(a.lambda, b.lambda, 1e-8);
    EXPECT_LT(testing::sup_diff(a.eigenfunction, b.eigenfunction), 1e-6);
    EXPECT_GT(b.iterations, 1);
}

TEST(SpectralBound, PerronSquaringResolvesSmallGap) {
    // Two nearly equal wells coupled only through a narrow kernel: the top two
    // eigenvalues almost coincide.
    const auto g = make_grid(0.0, 1.0, 60);
    const auto op = gaussian_operator(g, 0.05, 0.2);
    const auto v = ScalarField::sample(g, [](double x) {
        return std::abs(x - 0.25) < 0.05 ? 2.0 : std::abs(x - 0.75) < 0.05 ? 2.0 - 1e-3 : 0.0;
    });
    EXPECT_THROW(perron_power(*op, v, {.max_squarings = 0}), NumericError);
    const auto r = perron_power(*op, v);
    EXPECT_GT(r.iterations, PowerIterationOptions{}.square_every);
    EXPECT_NEAR(r.lambda, rayleigh_symmetric(*op, v).lambda, 1e-8);
    EXPECT_GT(r.eigenfunction.min(), 0.0);
    EXPECT_LE(r.residual, 1e-8);
}

TEST(SpectralBound, ResidualAndPositivityInvariants) {
    const auto g = make_grid(0.0, 1.0, 80);
    std::mt19937_64 rng(5);
    for (auto kind : {DispersalKind::N, DispersalKind::D}) {
        const auto op = gaussian_operator(g, 0.07, 2.0, kind);
        for (int t = 0; t < 5; ++t) {
            const auto v = testing::random_signed(g, rng);
            for (const auto& r : {rayleigh_symmetric(*op, v), perron_power(*op, v)}) {
                EXPECT_GT(r.eigenfunction.min(), 0.0);
                EXPECT_NEAR(r.eigenfunction.max(), 1.0, 1e-15);
                EXPECT_LE(r.residual, 1e-8 * std::max(1.0, std::abs(r.lambda)));
            }
        }
    }
}

TEST(SpectralBound, MonotoneAndShiftEquivariant) {
    const auto g = make_grid(0.0, 1.0, 64);
    std::mt19937_64 rng(8);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    for (int t = 0; t < 20; ++t) {
        const auto v1 = testing::random_signed(g, rng);
        const Eigen::VectorXd bump = testing::random_positive(g, rng, 0.0, 0.5).values();
        const ScalarField v2(g, v1.values() + bump);
        const double l1 = spectral_bound(*op, v1).lambda;
        EXPECT_LE(l1, spectral_bound(*op, v2).lambda + 1e-13);
        const double c = 0.3 * (t - 10);
        const ScalarField shifted(g, v1.values().array() + c);
        EXPECT_NEAR(spectral_bound(*op, shifted).lambda, l1 + c, 1e-10);
    }
}

TEST(SpectralBound, LogisticStateIsLinearlyStable) {
    const auto g = make_grid(0.0, 1.0, 100);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    const auto m = cosine_profile(g);
    const auto ud = solve_steady_monotone(*op, ReactionSpec::logistic(m));
    ASSERT_TRUE(ud.exists);
    const ScalarField potential(g, m.values() - 2.0 * ud.profile.values());
    EXPECT_LT(spectral_bound(*op, potential).lambda, 0.0);
}

TEST(SpectralBound, NonsymmetricKernelUsesPerron) {
    const auto g = make_grid(0.0, 1.0, 30);
    Eigen::MatrixXd t(30, 30);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 30; ++j) t(i, j) = std::exp(-std::abs(i - j - 2) / 5.0);
    const auto op = assemble_operator(DispersalKind::N, 1.0, build_kernel_matrix(KernelSpec::table(t), g), g);
    const auto r = spectral_bound(*op, cosine_profile(g));
    EXPECT_EQ(r.method, SpectralMethod::perron_power);
    EXPECT_GT(r.eigenfunction.min(), 0.0);
    EXPECT_LE(r.residual, 1e-8 * std::max(1.0, std::abs(r.lambda)));
    EXPECT_THROW(rayleigh_symmetric(*op, cosine_profile(g)), InvalidArgument);
}

TEST(SpectralBound, ReducibleMatrixReported) {
    const auto g = make_grid(0.0, 1.0, 20);
    // Radius below the spacing: only self-interaction, the grid is disconnected.
    const auto op = assemble_operator(DispersalKind::D, 1.0, build_kernel_matrix(KernelSpec::tophat(0.01), g), g);
    EXPECT_THROW(perron_power(*op, cosine_profile(g)), ReducibleMatrixError);
    EXPECT_THROW(spectral_bound(*op, cosine_profile(g)), ReducibleMatrixError);
}

TEST(SpectralBound, MixedOperatorPathsAgree) {
    const auto g = make_grid(0.0, 1.0, 24);
    const auto op = gaussian_operator(g, 0.1, 1.0, DispersalKind::mixed, 0.5);
    const auto m = cosine_profile(g);
    EXPECT_NEAR(rayleigh_symmetric(*op, m).lambda, perron_power(*op, m).lambda, 1e-8);
}

TEST(ClassifyStability, SignRule) {
    EXPECT_EQ(classify_stability(0.3, 1.0).sign, Stability::unstable);
    EXPECT_EQ(classify_stability(-0.3, 1.0).sign, Stability::stable);
    EXPECT_EQ(classify_stability(1e-12, 1.0).sign, Stability::neutral);
    EXPECT_DOUBLE_EQ(classify_stability(0.0, 4.0).tolerance, 4e-8);
    EXPECT_THROW(classify_stability(0.0, 0.0), InvalidArgument);
}

}  // namespace
}  // namespace ncl

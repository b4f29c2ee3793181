#include "ncl/competition.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace ncl {
namespace {

using testing::cosine_profile;
using testing::gaussian_operator;
using testing::sup_diff;

CompetitionSystemPtr classic_system(std::size_t n, double b, double c, double d = 1.0, double D = 1.0) {
    const auto g = make_grid(0.0, 1.0, n);
    const auto m = cosine_profile(g);
    return assemble_system(classic_spec(gaussian_operator(g, 0.1, d), gaussian_operator(g, 0.1, D), m, m, b, c));
}

TEST(AssembleSystem, ClassicGate) {
    const auto ok = classic_system(40, 0.5, 0.5);
    EXPECT_TRUE(ok->classifiable());
    const auto refused = classic_system(40, 2.0, 1.0);
    EXPECT_FALSE(refused->classifiable());
    EXPECT_NE(refused->gate_reason().find("bc"), std::string::npos);
}

TEST(AssembleSystem, ClassicRejectsSpatialCompetition) {
    const auto g = make_grid(0.0, 1.0, 40);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    SystemSpec spec = classic_spec(op, op, cosine_profile(g), cosine_profile(g), 0.5, 0.5);
    spec.b = ScalarField::sample(g, [](double x) { return 0.2 + 0.1 * x; });
    EXPECT_THROW(assemble_system(spec), InvalidArgument);
}

TEST(AssembleSystem, MixedEndpoints) {
    const auto g = make_grid(0.0, 1.0, 40);
    const auto m = cosine_profile(g);
    SystemSpec spec = classic_spec(gaussian_operator(g, 0.1, 1.0, DispersalKind::mixed, 0.0),
                                   gaussian_operator(g, 0.1, 1.0, DispersalKind::mixed, 1.0), m, m, 0.5, 0.5);
    spec.variant = Variant::mixed;
    const auto s = assemble_system(spec);
    EXPECT_DOUBLE_EQ(s->alpha(), 0.0);
    EXPECT_DOUBLE_EQ(s->beta(), 1.0);
    EXPECT_THROW(assemble_operator(DispersalKind::mixed, 1.0, build_kernel_matrix(KernelSpec::gaussian(0.1), g), g, 1.5),
                 InvalidArgument);
}

SystemSpec general_spec(const GridPtr& g, ScalarField b, ScalarField c, ScalarField b1, ScalarField c2) {
    const auto op = gaussian_operator(g, 0.1, 1.0);
    const auto m = cosine_profile(g);
    return {op, op, m, m, std::move(b), std::move(c), std::move(b1), std::move(c2), Variant::location_dependent};
}

TEST(Condition15, Examples) {
    const auto g = make_grid(0.0, 1.0, 40);
    auto k = [&](double v) { return ScalarField::constant(g, v); };
    auto ramp = [&](double lo, double hi) { return ScalarField::sample(g, [=](double x) { return lo + (hi - lo) * x; }); };

    const auto s1 = assemble_system(general_spec(g, k(0.5), k(0.5), k(1.0), k(1.0)));
    EXPECT_TRUE(check_condition_1_5(*s1).holds);
    EXPECT_NEAR(check_condition_1_5(*s1).margin, 0.75, 1e-15);

    const auto s2 = assemble_system(general_spec(g, ramp(0.2, 0.4), ramp(0.3, 0.5), ramp(0.9, 1.0), ramp(0.8, 1.0)));
    EXPECT_TRUE(check_condition_1_5(*s2).holds);
    EXPECT_NEAR(check_condition_1_5(*s2).margin, 0.72 - 0.2, 1e-12);

    const auto s3 = assemble_system(general_spec(g, k(2.0), k(1.0), k(1.0), k(1.0)));
    EXPECT_FALSE(check_condition_1_5(*s3).holds);
    EXPECT_FALSE(s3->classifiable());
}

TEST(Integrate, OdeLimitClosedForm) {
    const auto g = make_grid(0.0, 1.0, 30);
    const auto m = cosine_profile(g);
    const auto op = gaussian_operator(g, 0.1, 0.0);
    const auto s = assemble_system(classic_spec(op, op, m, m, 0.5, 0.5));
    const SystemState s0{ScalarField::constant(g, 0.3, FieldTag::density), ScalarField::constant(g, 0.7, FieldTag::density), 0.0};
    const SteadyMarch r = march_to_steady(*s, s0, {1e-13, 1e4, 25});
    ASSERT_TRUE(r.converged);
    const Eigen::VectorXd expected = (0.5 / 0.75) * m.values().cwiseMax(0.0);
    EXPECT_LT((r.state.u.values() - expected).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.state.v.values() - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Integrate, DecoupledSpeciesReachSemiTrivials) {
    const auto s = classic_system(50, 0.0, 0.0, 1.0, 0.5);
    const SemiTrivials st = semi_trivial_states(*s);
    const SystemState s0{ScalarField::constant(s->grid(), 0.2, FieldTag::density),
                         ScalarField::constant(s->grid(), 0.4, FieldTag::density), 0.0};
    const SteadyMarch r = march_to_steady(*s, s0);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(sup_diff(r.state.u, st.u_d.profile), 1e-8);
    EXPECT_LT(sup_diff(r.state.v, st.v_D.profile), 1e-8);
}

TEST(Integrate, TypeNMassBookkeeping) {
    const auto s = classic_system(60, 0.4, 0.6, 1.0, 2.0);
    const SystemState s0 = random_probe(*s, 7, 0).state;
    const Trajectory tr = integrate(*s, s0, 20.0, {0.5});
    ASSERT_GE(tr.mass_defect_u.size(), 30u);
    for (std::size_t k = 0; k < tr.mass_defect_u.size(); ++k) {
        EXPECT_LT(tr.mass_defect_u[k], 1e-8);
        EXPECT_LT(tr.mass_defect_v[k], 1e-8);
    }
    EXPECT_LE(tr.max_clip, 1e-12);
}

TEST(Integrate, InvariantBoxAndCompetitiveOrder) {
    const auto s = classic_system(50, 0.5, 0.7);
    SplitMix64 rng(3);
    for (int k = 0; k < 3; ++k) {
        const SystemState lo = random_probe(*s, 11, static_cast<std::size_t>(k)).state;
        Eigen::VectorXd uh = lo.u.values();
        Eigen::VectorXd vh = lo.v.values();
        for (Eigen::Index i = 0; i < uh.size(); ++i) {
            uh[i] += rng.uniform(0.0, 0.5);
            vh[i] *= rng.uniform(0.1, 1.0);
        }
        const SystemState hi{ScalarField(s->grid(), uh, FieldTag::density), ScalarField(s->grid(), vh, FieldTag::density), 0.0};
        const Trajectory a = integrate(*s, hi, 15.0, {0.25});
        const Trajectory b = integrate(*s, lo, 15.0, {0.25});
        ASSERT_EQ(a.states.size(), b.states.size());
        for (std::size_t t = 0; t < a.states.size(); ++t) {
            EXPECT_TRUE((a.states[t].u.values().array() >= b.states[t].u.values().array()).all());
            EXPECT_TRUE((a.states[t].v.values().array() <= b.states[t].v.values().array()).all());
            EXPECT_LE(a.states[t].u.max(), std::max(uh.maxCoeff(), s->c1_u()) * (1 + 1e-12));
        }
    }
}

TEST(Integrate, RejectsNegativeStart) {
    const auto s = classic_system(30, 0.5, 0.5);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(30, 0.5);
    const SystemState bad{ScalarField(s->grid(), u), ScalarField(s->grid(), -u), 0.0};
    EXPECT_THROW(integrate(*s, bad, 1.0), InvalidArgument);
}

TEST(SemiTrivial, Examples) {
    const auto g = make_grid(0.0, 1.0, 50);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    const auto opD = gaussian_operator(g, 0.1, 1.0, DispersalKind::D);
    const auto one = ScalarField::constant(g, 1.0);
    const auto minus = ScalarField::constant(g, -1.0);
    const auto s = assemble_system(classic_spec(op, opD, one, minus, 0.5, 0.5));
    const SemiTrivials st = semi_trivial_states(*s);
    ASSERT_TRUE(st.u_d.exists);
    EXPECT_LT((st.u_d.profile.values().array() - 1.0).abs().maxCoeff(), 1e-10);
    EXPECT_FALSE(st.v_D.exists);

    SystemSpec spec = general_spec(g, ScalarField::constant(g, 0.2), ScalarField::constant(g, 0.2),
                                   ScalarField::constant(g, 2.0), ScalarField::constant(g, 1.0));
    spec.m = one;
    const SemiTrivials sr = semi_trivial_states(*assemble_system(spec));
    EXPECT_LT((sr.u_d.profile.values().array() - 0.5).abs().maxCoeff(), 1e-10);
}

TEST(StabilityIndices, DecouplingGivesSingleSpeciesBound) {
    const auto s = classic_system(50, 0.0, 0.5);
    const SemiTrivials st = semi_trivial_states(*s);
    const StabilityIndices idx = stability_indices(*s, st.u_d.profile, st.v_D.profile);
    EXPECT_NEAR(idx.mu.lambda, st.v_D.lambda_star, 1e-10);
}

TEST(PositiveSteadyState, SymmetricScaling) {
    const auto s = classic_system(50, 0.5, 0.5);
    const SemiTrivials st = semi_trivial_states(*s);
    const PositiveSearch r = find_positive_steady_state(*s, 4, 1);
    ASSERT_TRUE(r.representative.has_value());
    const Eigen::VectorXd expected = st.u_d.profile.values() / 1.5;
    EXPECT_LT((r.representative->u.values() - expected).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((r.representative->v.values() - expected).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(r.residual, 1e-9);
}

TEST(PositiveSteadyState, DecoupledIsProductOfSemiTrivials) {
    const auto s = classic_system(40, 0.0, 0.0, 1.0, 0.3);
    const SemiTrivials st = semi_trivial_states(*s);
    const PositiveSearch r = find_positive_steady_state(*s, 2, 5);
    ASSERT_TRUE(r.representative.has_value());
    EXPECT_LT(sup_diff(r.representative->u, st.u_d.profile), 1e-8);
    EXPECT_LT(sup_diff(r.representative->v, st.v_D.profile), 1e-8);
}

TEST(Classify, ContinuumCase) {
    const auto s = classic_system(50, 1.0, 1.0);
    ClassifyOptions opt;
    opt.probe_starts = 6;
    opt.seed = 42;
    const ClassificationReport rep = classify_global_dynamics(*s, opt);
    ASSERT_EQ(rep.case_string(), "iv") << rep.note;
    EXPECT_TRUE(rep.continuum.detected);
    EXPECT_EQ(rep.evidence, "verified certificate");
    for (const auto& [sv, r] : rep.continuum.family_residuals) EXPECT_LT(r, 1e-10) << sv;
    EXPECT_GE(rep.continuum.distinct_segment_points, 2);
    EXPECT_TRUE(rep.oracles_passed());
}

TEST(Classify, CoexistenceCase) {
    const auto s = classic_system(50, 0.25, 0.25);
    ClassifyOptions opt;
    opt.probe_starts = 6;
    const ClassificationReport rep = classify_global_dynamics(*s, opt);
    ASSERT_EQ(rep.case_string(), "i") << rep.note;
    ASSERT_TRUE(rep.positive_state.has_value());
    EXPECT_LE(rep.positive_residual, 1e-9);
    EXPECT_TRUE(rep.probes_agree);
    EXPECT_EQ(rep.evidence, "probed conclusion");
    bool audited = false;
    for (const auto& o : rep.oracles) {
        EXPECT_TRUE(o.passed()) << o.name << " lhs " << o.lhs << " rhs " << o.rhs;
        audited = audited || o.name == "steady_pair_W_v";
    }
    EXPECT_TRUE(audited);
}

TEST(Classify, ExclusionCase) {
    // v disperses more slowly in a heterogeneous habitat and competes slightly harder.
    const auto g = make_grid(0.0, 1.0, 50);
    const auto m = cosine_profile(g, 1.0, 0.5);
    const auto s = assemble_system(classic_spec(gaussian_operator(g, 0.1, 1.0), gaussian_operator(g, 0.1, 1.0), m,
                                                ScalarField::constant(g, 1.0), 0.9, 1.0));
    ClassifyOptions opt;
    opt.probe_starts = 4;
    const ClassificationReport rep = classify_global_dynamics(*s, opt);
    ASSERT_TRUE(rep.indices.has_value());
    const Stability mu = rep.indices->mu_verdict.sign;
    const Stability nu = rep.indices->nu_verdict.sign;
    if (mu == Stability::unstable && nu == Stability::stable) {
        EXPECT_EQ(rep.case_string(), "ii");
    } else if (mu == Stability::stable && nu == Stability::unstable) {
        EXPECT_EQ(rep.case_string(), "iii");
    }
    EXPECT_NE(rep.status, ReportStatus::falsified);
}

TEST(Classify, RefusedGateStillRunsDynamics) {
    const auto s = classic_system(40, 1.5, 1.0);
    ClassifyOptions opt;
    opt.probe_starts = 2;
    const ClassificationReport rep = classify_global_dynamics(*s, opt);
    EXPECT_EQ(rep.case_string(), "unclassified");
    EXPECT_EQ(rep.status, ReportStatus::unclassified);
    EXPECT_EQ(rep.probes.size(), 4u);
}

TEST(Classify, DegenerateBranch) {
    const auto g = make_grid(0.0, 1.0, 50);
    const auto op = gaussian_operator(g, 0.1, 1.0);
    const auto s = assemble_system(classic_spec(op, op, cosine_profile(g), ScalarField::constant(g, -0.5), 0.5, 0.5));
    ClassifyOptions opt;
    opt.probe_starts = 4;
    const ClassificationReport rep = classify_global_dynamics(*s, opt);
    EXPECT_EQ(rep.case_string(), "degenerate_appendix_B");
    EXPECT_EQ(rep.predicted_attractor, "(u_d,0)");
    for (const auto& p : rep.probes) EXPECT_LT(p.distance, 1e-6);
}

TEST(Classify, DeterministicAcrossThreads) {
    const auto s = classic_system(40, 0.25, 0.25);
    ClassifyOptions a;
    a.probe_starts = 4;
    a.seed = 9;
    ClassifyOptions b = a;
    b.threads = 3;
    const auto ra = classify_global_dynamics(*s, a);
    const auto rb = classify_global_dynamics(*s, b);
    ASSERT_EQ(ra.probes.size(), rb.probes.size());
    for (std::size_t i = 0; i < ra.probes.size(); ++i) {
        EXPECT_EQ(ra.probes[i].limit.u.values(), rb.probes[i].limit.u.values());
        EXPECT_EQ(ra.probes[i].time, rb.probes[i].time);
    }
}

}  // namespace
}  // namespace ncl

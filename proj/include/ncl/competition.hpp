#pragma once

#include "ncl/dynamics.hpp"
#include "ncl/error.hpp"
#include "ncl/oracle.hpp"
#include "ncl/parallel.hpp"
#include "ncl/random.hpp"
#include "ncl/single_species.hpp"
#include "ncl/spatial.hpp"
#include "ncl/spectral.hpp"
#include "ncl/system.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ncl {

struct SemiTrivials {
    SteadyStateResult u_d;  // (u_d, 0)
    SteadyStateResult v_D;  // (0, v_D)
};

/// Single-species steady states of each species in the absence of the other.
inline SemiTrivials semi_trivial_states(const CompetitionSystem& s, const SteadyStateOptions& opt = {}) {
    return {solve_steady_monotone(s.op_u(), s.reaction_u(), opt), solve_steady_monotone(s.op_v(), s.reaction_v(), opt)};
}

struct StabilityIndices {
    /// Linearization at (u_d, 0) in v: L_v + M - b u_d.
    SpectralResult mu;
    /// Linearization at (0, v_D) in u: L_u + m - c v_D.
    SpectralResult nu;
    StabilityVerdict mu_verdict;
    StabilityVerdict nu_verdict;
};

namespace detail {

inline double stability_scale(const DispersalOperator& op, const ScalarField& potential) {
    return std::max({1.0, potential.sup_norm() + op.matrix().diagonal().cwiseAbs().maxCoeff()});
}

}  // namespace detail

inline StabilityIndices stability_indices(const CompetitionSystem& s, const ScalarField& u_d, const ScalarField& v_D,
                                          double neutral_rel_tol = kNeutralRelTol) {
    if (!same_grid(s.grid(), u_d.grid()) || !same_grid(s.grid(), v_D.grid())) {
        throw InvalidArgument("semi-trivial profiles live on a different grid");
    }
    const double res_u = detail::single_rhs(s.op_u(), s.reaction_u(), u_d.values()).cwiseAbs().maxCoeff();
    const double res_v = detail::single_rhs(s.op_v(), s.reaction_v(), v_D.values()).cwiseAbs().maxCoeff();
    if (res_u > 1e-9 * std::max(1.0, u_d.sup_norm()) || res_v > 1e-9 * std::max(1.0, v_D.sup_norm())) {
        throw InvalidArgument("stability indices need converged semi-trivial states");
    }
    const ScalarField pot_mu(s.grid(), (s.M().values().array() - s.b().values().array() * u_d.values().array()).matrix());
    const ScalarField pot_nu(s.grid(), (s.m().values().array() - s.c().values().array() * v_D.values().array()).matrix());
    StabilityIndices out;
    out.mu = spectral_bound(s.op_v(), pot_mu);
    out.nu = spectral_bound(s.op_u(), pot_nu);
    out.mu_verdict = classify_stability(out.mu.lambda, detail::stability_scale(s.op_v(), pot_mu), neutral_rel_tol);
    out.nu_verdict = classify_stability(out.nu.lambda, detail::stability_scale(s.op_u(), pot_nu), neutral_rel_tol);
    return out;
}

// ---------------------------------------------------------------------------
// Probing
// ---------------------------------------------------------------------------

enum class ProbeKind { random, corner_u, corner_v };

inline std::string_view to_string(ProbeKind k) {
    switch (k) {
        case ProbeKind::random: return "random";
        case ProbeKind::corner_u: return "corner_u";
        case ProbeKind::corner_v: return "corner_v";
    }
    return "?";
}

struct ProbeStart {
    ProbeKind kind = ProbeKind::random;
    SystemState state;
};

struct ProbeRecord {
    int index = 0;
    ProbeKind kind = ProbeKind::random;
    bool converged = false;
    double residual = 0.0;
    double time = 0.0;
    long steps = 0;
    SystemState limit;
    /// Sup distance of the limit to the predicted attractor (NaN when none).
    double distance = std::numeric_limits<double>::quiet_NaN();
    bool matched = false;
    /// Segment coordinate of the limit, continuum case only.
    std::optional<double> segment_s;
};

inline constexpr double kCornerEpsilon = 1e-3;
inline constexpr double kProbeFloor = 1e-3;

/// Random positive start: per species an amplitude log-uniform in [1e-3, C1], modulated
/// node-wise by a factor in [0.5, 1]. Seeded by (seed, index) alone.
inline ProbeStart random_probe(const CompetitionSystem& s, std::uint64_t seed, std::size_t index) {
    SplitMix64 rng(derive_seed(seed, index));
    const auto n = static_cast<Eigen::Index>(s.grid()->size());
    auto draw = [&](double c1) {
        const double amp = rng.log_uniform(kProbeFloor, std::max(c1, 2.0 * kProbeFloor));
        Eigen::VectorXd x(n);
        for (Eigen::Index i = 0; i < n; ++i) x[i] = amp * rng.uniform(0.5, 1.0);
        return x;
    };
    Eigen::VectorXd u = draw(s.c1_u());
    Eigen::VectorXd v = draw(s.c1_v());
    return {ProbeKind::random,
            {ScalarField(s.grid(), std::move(u), FieldTag::density), ScalarField(s.grid(), std::move(v), FieldTag::density), 0.0}};
}

/// Competitive-order extremes (C1_u, eps) and (eps, C1_v).
inline std::vector<ProbeStart> corner_probes(const CompetitionSystem& s) {
    const GridPtr& g = s.grid();
    auto field = [&](double x) { return ScalarField::constant(g, x, FieldTag::density); };
    return {{ProbeKind::corner_u, {field(s.c1_u()), field(kCornerEpsilon), 0.0}},
            {ProbeKind::corner_v, {field(kCornerEpsilon), field(s.c1_v()), 0.0}}};
}

inline double state_distance(const SystemState& a, const SystemState& b) {
    return std::max((a.u.values() - b.u.values()).cwiseAbs().maxCoeff(),
                    (a.v.values() - b.v.values()).cwiseAbs().maxCoeff());
}

inline double state_norm(const SystemState& a) { return std::max(a.u.sup_norm(), a.v.sup_norm()); }

/// Both components bounded away from zero: relative to their own size and in absolute terms,
/// so a component still decaying towards extinction does not count as positive.
inline bool is_positive_state(const SystemState& st, double rel = 1e-6, double floor = 1e-6) {
    return st.u.min() > rel * st.u.sup_norm() && st.v.min() > rel * st.v.sup_norm() && st.u.sup_norm() > floor &&
           st.v.sup_norm() > floor;
}

struct ProbeOptions {
    SteadyMarchOptions march{1e-10, 2e4, 25};
    int threads = 1;
};

inline std::vector<ProbeRecord> run_probes(const CompetitionSystem& s, const std::vector<ProbeStart>& starts,
                                           const ProbeOptions& opt = {}) {
    std::vector<ProbeRecord> out(starts.size());
    parallel_for(starts.size(), opt.threads, [&](std::size_t i) {
        const SteadyMarch r = march_to_steady(s, starts[i].state, opt.march);
        ProbeRecord& rec = out[i];
        rec.index = static_cast<int>(i);
        rec.kind = starts[i].kind;
        rec.converged = r.converged;
        rec.residual = r.residual;
        rec.time = r.state.t;
        rec.steps = r.steps;
        rec.limit = r.state;
    });
    return out;
}

/// Limits more than `tol` apart (sup norm), in probe order.
inline std::vector<SystemState> distinct_limits(const std::vector<ProbeRecord>& probes, double tol = 1e-6) {
    std::vector<SystemState> out;
    for (const auto& p : probes) {
        if (!p.converged) continue;
        const bool seen = std::any_of(out.begin(), out.end(),
                                      [&](const SystemState& q) { return state_distance(q, p.limit) <= tol; });
        if (!seen) out.push_back(p.limit);
    }
    return out;
}

namespace detail {

/// Newton on the coupled steady-state equations, used only to polish a state that the
/// dynamics already converged to.
inline std::optional<SystemState> newton_system(const CompetitionSystem& s, const SystemState& st, double target) {
    const auto n = static_cast<Eigen::Index>(s.grid()->size());
    Eigen::VectorXd x(2 * n);
    x << st.u.values(), st.v.values();
    auto residual_vec = [&](const Eigen::VectorXd& y) {
        Rhs r;
        evaluate_rhs(s, y.head(n), y.tail(n), r);
        Eigen::VectorXd f(2 * n);
        f << r.fu, r.fv;
        return f;
    };
    Eigen::VectorXd f = residual_vec(x);
    double res = f.cwiseAbs().maxCoeff();
    for (int it = 0; it < 20 && res > target; ++it) {
        const Eigen::ArrayXd u = x.head(n).array();
        const Eigen::ArrayXd v = x.tail(n).array();
        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);
        jac.topLeftCorner(n, n) = s.op_u().matrix();
        jac.bottomRightCorner(n, n) = s.op_v().matrix();
        const Eigen::ArrayXd& m = s.m().values().array();
        const Eigen::ArrayXd& M = s.M().values().array();
        const Eigen::ArrayXd& b = s.b().values().array();
        const Eigen::ArrayXd& c = s.c().values().array();
        const Eigen::ArrayXd& b1 = s.b1().values().array();
        const Eigen::ArrayXd& c2 = s.c2().values().array();
        for (Eigen::Index i = 0; i < n; ++i) {
            jac(i, i) += m[i] - 2.0 * b1[i] * u[i] - c[i] * v[i];
            jac(i, n + i) = -c[i] * u[i];
            jac(n + i, i) = -b[i] * v[i];
            jac(n + i, n + i) += M[i] - b[i] * u[i] - 2.0 * c2[i] * v[i];
        }
        const Eigen::VectorXd step = jac.fullPivLu().solve(-f);
        if (!step.allFinite()) return std::nullopt;
        const Eigen::VectorXd next = x + step;
        if (next.minCoeff() < 0.0) return std::nullopt;
        const Eigen::VectorXd fn = residual_vec(next);
        const double next_res = fn.cwiseAbs().maxCoeff();
        if (!(next_res < res)) break;
        x = next;
        f = fn;
        res = next_res;
    }
    if (res > std::max(target, 1e-9)) return std::nullopt;
    return SystemState{ScalarField(s.grid(), x.head(n), FieldTag::density),
                       ScalarField(s.grid(), x.tail(n), FieldTag::density), st.t};
}

}  // namespace detail

struct PositiveSearch {
    std::optional<SystemState> representative;
    double residual = 0.0;
    std::vector<ProbeRecord> probes;
    std::vector<SystemState> distinct;
};

/// Marches `starts` random positive initial pairs to steady state and returns a positive
/// limit if any probe finds one. Newton only polishes that limit.
inline PositiveSearch find_positive_steady_state(const CompetitionSystem& s, int starts, std::uint64_t seed,
                                                 const ProbeOptions& opt = {}) {
    if (starts <= 0) throw InvalidArgument("need at least one start");
    std::vector<ProbeStart> init;
    for (int i = 0; i < starts; ++i) init.push_back(random_probe(s, seed, static_cast<std::size_t>(i)));
    PositiveSearch out;
    out.probes = run_probes(s, init, opt);
    out.distinct = distinct_limits(out.probes);
    for (const auto& lim : out.distinct) {
        if (!is_positive_state(lim)) continue;
        auto polished = detail::newton_system(s, lim, 1e-13);
        out.representative = polished ? *polished : lim;
        out.residual = system_residual(s, out.representative->u, out.representative->v);
        break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

enum class DynamicsCase { i, ii, iii, iv, degenerate_appendix_B };

inline std::string_view to_string(DynamicsCase c) {
    switch (c) {
        case DynamicsCase::i: return "i";
        case DynamicsCase::ii: return "ii";
        case DynamicsCase::iii: return "iii";
        case DynamicsCase::iv: return "iv";
        case DynamicsCase::degenerate_appendix_B: return "degenerate_appendix_B";
    }
    return "?";
}

enum class ReportStatus { classified, unclassified, near_degenerate, falsified };

inline std::string_view to_string(ReportStatus s) {
    switch (s) {
        case ReportStatus::classified: return "classified";
        case ReportStatus::unclassified: return "unclassified";
        case ReportStatus::near_degenerate: return "near-degenerate, unclassified";
        case ReportStatus::falsified: return "falsified";
    }
    return "?";
}

struct ContinuumCertificate {
    bool detected = false;
    bool constant_coefficients = false;
    /// |bc - b1 c2|.
    double bc_gap = 0.0;
    /// ||b u_d - c2 v_D||_inf / ||v_D||_inf.
    double mismatch = 0.0;
    /// (s, ||F(s u_d, (1-s) v_D)||_inf).
    std::vector<std::pair<double, double>> family_residuals;
    /// Distinct segment points reached by probes.
    int distinct_segment_points = 0;
};

struct Falsification {
    std::string message;
    std::vector<SystemState> dump;
};

struct ClassifyOptions {
    int probe_starts = 20;
    std::uint64_t seed = 0;
    int threads = 1;
    double agreement_tol = 1e-6;
    double neutral_rel_tol = kNeutralRelTol;
    double bc_tol = 1e-10;
    double mismatch_tol = 1e-6;
    double family_tol = 1e-10;
    SteadyMarchOptions march{1e-10, 2e4, 25};
    SteadyStateOptions single;
};

struct ClassificationReport {
    std::optional<DynamicsCase> case_label;
    ReportStatus status = ReportStatus::unclassified;
    /// "verified certificate" for the continuum case, "probed conclusion" otherwise.
    std::string evidence;
    std::string note;

    Variant variant = Variant::classic;
    bool classifiable = false;
    std::string gate_reason;
    Condition15 condition_1_5;

    SemiTrivials semi_trivials;
    std::optional<StabilityIndices> indices;
    std::optional<SystemState> positive_state;
    double positive_residual = 0.0;
    /// Predicted attractor for the semi-trivial and degenerate cases: "(0,0)", "(u_d,0)", "(0,v_D)".
    std::string predicted_attractor;
    ContinuumCertificate continuum;

    std::vector<ProbeRecord> probes;
    bool probes_converged = false;
    bool probes_agree = false;
    int distinct_limit_count = 0;

    std::vector<OracleReport> oracles;
    std::optional<Falsification> falsification;

    std::uint64_t seed = 0;
    int probe_starts = 0;

    std::string case_string() const { return case_label ? std::string(to_string(*case_label)) : "unclassified"; }
    bool oracles_passed() const {
        return std::all_of(oracles.begin(), oracles.end(), [](const OracleReport& r) { return r.passed(); });
    }
};

namespace detail {

inline SystemState semi_state(const CompetitionSystem& s, const SemiTrivials& st, bool u_side) {
    const ScalarField zero = ScalarField::constant(s.grid(), 0.0, FieldTag::density);
    return u_side ? SystemState{st.u_d.profile, zero, 0.0} : SystemState{zero, st.v_D.profile, 0.0};
}

/// Least-squares coordinate of `st` on the segment (s u_d, (1-s) v_D), clamped to [0, 1],
/// and the sup distance to that point.
inline std::pair<double, double> segment_projection(const SystemState& st, const ScalarField& u_d, const ScalarField& v_D) {
    const Eigen::VectorXd& u = st.u.values();
    const Eigen::VectorXd& v = st.v.values();
    const Eigen::VectorXd& a = u_d.values();
    const Eigen::VectorXd& b = v_D.values();
    const double num = u.dot(a) + (b - v).dot(b);
    const double den = a.dot(a) + b.dot(b);
    const double sv = std::clamp(num / den, 0.0, 1.0);
    const double dist = std::max((u - sv * a).cwiseAbs().maxCoeff(), (v - (1.0 - sv) * b).cwiseAbs().maxCoeff());
    return {sv, dist};
}

inline OracleReport inequality_report(std::string name, double lhs, double rhs, double scale, SignClaim claim) {
    OracleReport r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.difference = lhs - rhs;
    r.scale = std::max(scale, 1e-300);
    r.tolerance = 0.0;
    r.sign_claim = claim;
    r.agrees = true;
    r.sign_satisfied = sign_ok(claim, r.difference, kSignTol * r.scale);
    return r;
}

/// Rayleigh bound at a semi-trivial state: testing the linearization with the resident
/// profile gives int (s_res p - k q) p^2 <= lambda int p^2, exactly up to the residual.
inline OracleReport rayleigh_bound(std::string name, const DispersalOperator& op, const ReactionSpec& reaction,
                                   const ScalarField& resident, const ScalarField& coupling,
                                   const ScalarField& other, double lambda) {
    const Grid& g = op.grid_ref();
    const Eigen::ArrayXd p = resident.values().array();
    const Eigen::ArrayXd q = other.values().array();
    const Eigen::ArrayXd sr = reaction.self_regulation().values().array();
    const Eigen::ArrayXd k = coupling.values().array();
    const double lhs = integrate(g, ((sr * p - k * q) * p.square()).matrix());
    const double rhs = lambda * integrate(g, p.square().matrix());
    const Eigen::VectorXd res = single_rhs(op, reaction, resident.values());
    const double res_term = integrate(g, (res.array().abs() * p).matrix());
    const double scale = integrate(g, ((sr * p + k * q) * p.square()).matrix()) + std::abs(rhs);
    OracleReport r = inequality_report(std::move(name), lhs, rhs, scale, SignClaim::nonpositive);
    r.sign_satisfied = r.difference <= res_term + kSignTol * r.scale;
    return r;
}

/// For steady states (u, v), (u*, v*) with species `which` positive in both:
///   W = int (self * w + coupling * z) w^2  equals  int (u* L u - u L u*) w^2 / (u u*),
/// up to a bound computed from the two residuals. The sign claim follows the order of
/// the two profiles through the symmetrized form.
inline OracleReport pair_audit(const CompetitionSystem& s, const SystemState& a, const SystemState& b, bool u_species) {
    const DispersalOperator& op = u_species ? s.op_u() : s.op_v();
    const ScalarField& p = u_species ? a.u : a.v;
    const ScalarField& ps = u_species ? b.u : b.v;
    const Eigen::ArrayXd w = (a.u.values() - b.u.values()).array();
    const Eigen::ArrayXd z = (a.v.values() - b.v.values()).array();
    const Grid& g = *s.grid();
    double wval = 0.0;
    if (u_species) {
        wval = integrate(g, ((s.b1().values().array() * w + s.c().values().array() * z) * w.square()).matrix());
    } else {
        wval = integrate(g, ((s.b().values().array() * w + s.c2().values().array() * z) * z.square()).matrix());
    }
    const auto [cross, cross_mag] = direct_cross_form(g, op.matrix(), 1.0, p.values(), ps.values());

    Rhs ra, rb;
    evaluate_rhs(s, a.u.values(), a.v.values(), ra);
    evaluate_rhs(s, b.u.values(), b.v.values(), rb);
    const Eigen::ArrayXd res_a = (u_species ? ra.fu : ra.fv).array().abs();
    const Eigen::ArrayXd res_b = (u_species ? rb.fu : rb.fv).array().abs();
    const Eigen::ArrayXd gap = p.values().array() - ps.values().array();
    const double bound = integrate(g, ((res_a / p.values().array() + res_b / ps.values().array()) * gap.square()).matrix());

    OracleReport r;
    r.name = u_species ? "steady_pair_W_u" : "steady_pair_W_v";
    r.lhs = wval;
    r.rhs = cross;
    r.difference = wval - cross;
    r.scale = std::max(cross_mag, 1e-300);
    r.tolerance = (1.0 + 1e-6) * bound / r.scale + 1e-10;
    r.agrees = std::abs(r.difference) <= r.tolerance * r.scale;
    r.sign_claim = order_claim(p, ps);
    r.sign_satisfied = sign_ok(r.sign_claim, wval, bound + kSignTol * r.scale);
    return r;
}

/// Combined sign logic for two positive steady states in competitive order (classic
/// coefficients): W_u <= 0 <= W_v forces int (w+cz)^2 (cz-w) >= 0 and, in the equality
/// case, w + cz = 0.
inline OracleReport combined_sign_logic(const CompetitionSystem& s, const SystemState& a, const SystemState& b,
                                        double slack) {
    const double bc = s.b()[0];
    const double cc = s.c()[0];
    const ScalarField w(s.grid(), a.u.values() - b.u.values());
    const ScalarField z(s.grid(), a.v.values() - b.v.values());
    const SignFunctionals f = sign_functional_W(a.u, b.u, a.v, b.v, s.b1(), s.c(), s.b(), s.c2());
    const double key = key_relation(w, z, bc, cc);
    const Eigen::ArrayXd sum = w.values().array() + cc * z.values().array();
    const double mag = integrate(*s.grid(), (sum.square() * (cc * z.values().array().abs() + w.values().array().abs())).matrix());
    OracleReport r = inequality_report("combined_sign_logic", key, 0.0, std::max(mag, 1e-300), SignClaim::nonnegative);
    const bool signs_hold = f.w_u <= slack && f.w_v >= -slack;
    if (signs_hold) {
        r.sign_satisfied = key >= -slack - kSignTol * r.scale;
        const bool all_zero = std::abs(f.w_u) <= slack && std::abs(f.w_v) <= slack && std::abs(key) <= slack;
        if (all_zero) {
            const double size = std::max({w.sup_norm(), cc * z.sup_norm(), 1e-300});
            r.sign_satisfied = r.sign_satisfied && sum.abs().maxCoeff() <= 1e-3 * size;
        }
    } else {
        r.sign_claim = SignClaim::none;
        r.sign_satisfied = true;
    }
    return r;
}

inline bool competitively_ordered(const SystemState& a, const SystemState& b) {
    const auto ge = [](const ScalarField& x, const ScalarField& y) { return (x.values().array() >= y.values().array()).all(); };
    return (ge(a.u, b.u) && ge(b.v, a.v)) || (ge(b.u, a.u) && ge(a.v, b.v));
}

inline void attach_oracles(const CompetitionSystem& s, ClassificationReport& rep) {
    const bool have_u = rep.semi_trivials.u_d.exists;
    const bool have_v = rep.semi_trivials.v_D.exists;
    const bool symmetric = s.op_u().weighted_symmetric() && s.op_v().weighted_symmetric();

    if (have_u && have_v && rep.indices && symmetric) {
        const ScalarField& ud = rep.semi_trivials.u_d.profile;
        const ScalarField& vD = rep.semi_trivials.v_D.profile;
        rep.oracles.push_back(rayleigh_bound("rayleigh_bound_mu", s.op_v(), s.reaction_v(), vD, s.b(), ud,
                                             rep.indices->mu.lambda));
        rep.oracles.push_back(rayleigh_bound("rayleigh_bound_nu", s.op_u(), s.reaction_u(), ud, s.c(), vD,
                                             rep.indices->nu.lambda));
        if (s.variant() == Variant::classic) {
            const double b = s.b()[0];
            const double c = s.c()[0];
            const NeutralFunctionals nf = neutral_case_functionals(ud, vD, b, c);
            if (b * c <= 1.0) {
                rep.oracles.push_back(inequality_report("neutral_chain", b * b * b * nf.i2 + nf.i1, nf.ikey, nf.scale,
                                                        SignClaim::nonnegative));
            }
            if (rep.case_label == DynamicsCase::iv) {
                OracleReport r = inequality_report("neutral_key_vanishes", nf.ikey, 0.0, nf.scale, SignClaim::zero);
                r.sign_satisfied = std::abs(nf.ikey) <= 1e-8 * nf.scale;
                rep.oracles.push_back(r);
            }
        }
    }

    // Steady states known to the report: semi-trivials plus distinct converged limits.
    std::vector<SystemState> states;
    if (have_u) states.push_back(semi_state(s, rep.semi_trivials, true));
    if (have_v) states.push_back(semi_state(s, rep.semi_trivials, false));
    if (rep.positive_state) states.push_back(*rep.positive_state);
    for (const auto& lim : distinct_limits(rep.probes)) {
        const bool seen = std::any_of(states.begin(), states.end(),
                                      [&](const SystemState& q) { return state_distance(q, lim) <= 1e-6; });
        if (!seen) states.push_back(lim);
    }
    constexpr std::size_t kMaxPairs = 24;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < states.size() && pairs < kMaxPairs; ++i) {
        for (std::size_t j = i + 1; j < states.size() && pairs < kMaxPairs; ++j) {
            const SystemState& a = states[i];
            const SystemState& b = states[j];
            bool any = false;
            if (a.u.min() > kDensityFloor && b.u.min() > kDensityFloor) {
                rep.oracles.push_back(pair_audit(s, a, b, true));
                any = true;
            }
            if (a.v.min() > kDensityFloor && b.v.min() > kDensityFloor) {
                rep.oracles.push_back(pair_audit(s, a, b, false));
                any = true;
            }
            if (s.variant() == Variant::classic && is_positive_state(a) && is_positive_state(b) &&
                competitively_ordered(a, b) && s.b()[0] * s.c()[0] <= 1.0) {
                const double slack = 1e-8 * std::max(1.0, state_norm(a) + state_norm(b));
                rep.oracles.push_back(combined_sign_logic(s, a, b, slack));
            }
            pairs += any ? 1 : 0;
        }
    }

    if (s.variant() == Variant::mixed && rep.positive_state && have_u && s.op_u().weighted_symmetric()) {
        rep.oracles.push_back(mixed_quadratic_form(s.op_u(), rep.semi_trivials.u_d.profile, rep.positive_state->u));
    }
}

inline void falsify(ClassificationReport& rep, std::string message, std::vector<SystemState> dump) {
    rep.status = ReportStatus::falsified;
    rep.case_label.reset();
    rep.falsification = Falsification{std::move(message), std::move(dump)};
}

/// Marks probes against one predicted state; returns true when all matched.
inline bool match_probes(std::vector<ProbeRecord>& probes, const SystemState& target, double tol) {
    bool all = true;
    for (auto& p : probes) {
        p.distance = state_distance(p.limit, target);
        p.matched = p.converged && p.distance <= tol;
        all = all && p.matched;
    }
    return all;
}

inline std::vector<SystemState> mismatched_limits(const std::vector<ProbeRecord>& probes) {
    std::vector<SystemState> out;
    for (const auto& p : probes) {
        if (!p.matched) out.push_back(p.limit);
    }
    return out;
}

}  // namespace detail

/// Classifies the long-time dynamics.
///
/// Pipeline: semi-trivial states; if at most one exists, the degenerate branch predicts
/// the survivor. Otherwise the stability indices (mu, nu) select a case, and the
/// prediction is checked against probes marched from random and corner data. The
/// continuum case additionally needs the algebraic certificate. A prediction that the
/// probes contradict is reported as a falsification, never reclassified.
inline ClassificationReport classify_global_dynamics(const CompetitionSystem& s, const ClassifyOptions& opt = {}) {
    if (opt.probe_starts < 0) throw InvalidArgument("probe count must be nonnegative");
    ClassificationReport rep;
    rep.variant = s.variant();
    rep.classifiable = s.classifiable();
    rep.gate_reason = s.gate_reason();
    rep.condition_1_5 = s.condition_1_5();
    rep.seed = opt.seed;
    rep.probe_starts = opt.probe_starts;

    rep.semi_trivials = semi_trivial_states(s, opt.single);
    const bool have_u = rep.semi_trivials.u_d.exists;
    const bool have_v = rep.semi_trivials.v_D.exists;

    std::vector<ProbeStart> starts;
    for (int i = 0; i < opt.probe_starts; ++i) starts.push_back(random_probe(s, opt.seed, static_cast<std::size_t>(i)));
    for (auto& cp : corner_probes(s)) starts.push_back(std::move(cp));
    rep.probes = run_probes(s, starts, {opt.march, opt.threads});
    rep.probes_converged = std::all_of(rep.probes.begin(), rep.probes.end(), [](const ProbeRecord& p) { return p.converged; });
    const std::vector<SystemState> limits = distinct_limits(rep.probes, opt.agreement_tol);
    rep.distinct_limit_count = static_cast<int>(limits.size());

    if (have_u && have_v) {
        rep.indices = stability_indices(s, rep.semi_trivials.u_d.profile, rep.semi_trivials.v_D.profile,
                                        opt.neutral_rel_tol);
    }
    for (const auto& lim : limits) {
        if (is_positive_state(lim)) {
            auto polished = detail::newton_system(s, lim, 1e-13);
            rep.positive_state = polished ? *polished : lim;
            rep.positive_residual = system_residual(s, rep.positive_state->u, rep.positive_state->v);
            break;
        }
    }

    auto finish = [&](ClassificationReport& r) -> ClassificationReport& {
        detail::attach_oracles(s, r);
        return r;
    };

    if (!rep.classifiable) {
        rep.status = ReportStatus::unclassified;
        rep.note = "dynamics only: " + rep.gate_reason;
        return finish(rep);
    }
    if (!rep.probes_converged) {
        rep.status = ReportStatus::unclassified;
        rep.note = "some probes did not reach steady state within the time budget";
        return finish(rep);
    }

    const double tol = opt.agreement_tol;

    if (!(have_u && have_v)) {
        SystemState predicted;
        if (have_u) {
            predicted = detail::semi_state(s, rep.semi_trivials, true);
            rep.predicted_attractor = "(u_d,0)";
        } else if (have_v) {
            predicted = detail::semi_state(s, rep.semi_trivials, false);
            rep.predicted_attractor = "(0,v_D)";
        } else {
            const ScalarField zero = ScalarField::constant(s.grid(), 0.0, FieldTag::density);
            predicted = {zero, zero, 0.0};
            rep.predicted_attractor = "(0,0)";
        }
        rep.positive_state.reset();
        rep.probes_agree = detail::match_probes(rep.probes, predicted, tol);
        if (!rep.probes_agree) {
            auto dump = detail::mismatched_limits(rep.probes);
            dump.insert(dump.begin(), predicted);
            detail::falsify(rep, "degenerate branch predicts " + rep.predicted_attractor + " but some probe converged elsewhere",
                            std::move(dump));
            return finish(rep);
        }
        rep.case_label = DynamicsCase::degenerate_appendix_B;
        rep.status = ReportStatus::classified;
        rep.evidence = "probed conclusion";
        return finish(rep);
    }

    const Stability mu = rep.indices->mu_verdict.sign;
    const Stability nu = rep.indices->nu_verdict.sign;
    const SystemState st_u = detail::semi_state(s, rep.semi_trivials, true);
    const SystemState st_v = detail::semi_state(s, rep.semi_trivials, false);

    auto semi_case = [&](DynamicsCase label, const SystemState& predicted, const char* name, bool neutral) {
        rep.predicted_attractor = name;
        rep.probes_agree = detail::match_probes(rep.probes, predicted, tol);
        if (rep.probes_agree) {
            rep.case_label = label;
            rep.status = ReportStatus::classified;
            rep.evidence = "probed conclusion";
            if (neutral) rep.note = "neutral index; accepted because every probe reached the predicted attractor";
        } else if (neutral) {
            rep.status = ReportStatus::near_degenerate;
            rep.note = "neutral index and probes do not confirm the predicted attractor";
        } else {
            auto dump = detail::mismatched_limits(rep.probes);
            dump.insert(dump.begin(), predicted);
            detail::falsify(rep, std::string("indices predict ") + name + " but some probe converged elsewhere",
                            std::move(dump));
        }
        return finish(rep);
    };

    if (mu == Stability::unstable && nu == Stability::unstable) {
        if (!rep.positive_state || rep.positive_residual > 1e-9) {
            detail::falsify(rep, "both semi-trivial states unstable but no coexistence state was reached", limits);
            return finish(rep);
        }
        rep.probes_agree = detail::match_probes(rep.probes, *rep.positive_state, tol);
        if (!rep.probes_agree) {
            auto dump = detail::mismatched_limits(rep.probes);
            dump.insert(dump.begin(), *rep.positive_state);
            detail::falsify(rep, "coexistence predicted unique and globally attracting, but probes reached distinct limits",
                            std::move(dump));
            return finish(rep);
        }
        rep.case_label = DynamicsCase::i;
        rep.status = ReportStatus::classified;
        rep.evidence = "probed conclusion";
        return finish(rep);
    }
    if (mu == Stability::unstable) return semi_case(DynamicsCase::ii, st_v, "(0,v_D)", nu == Stability::neutral);
    if (nu == Stability::unstable) return semi_case(DynamicsCase::iii, st_u, "(u_d,0)", mu == Stability::neutral);

    // Both indices nonpositive.
    const ScalarField& ud = rep.semi_trivials.u_d.profile;
    const ScalarField& vD = rep.semi_trivials.v_D.profile;
    ContinuumCertificate& cc = rep.continuum;
    cc.constant_coefficients = s.b().is_constant() && s.c().is_constant() && s.b1().is_constant() && s.c2().is_constant();
    cc.bc_gap = std::abs(s.b()[0] * s.c()[0] - s.b1()[0] * s.c2()[0]);
    cc.mismatch = (s.b().values().array() * ud.values().array() - s.c2().values().array() * vD.values().array())
                      .abs()
                      .maxCoeff() /
                  vD.sup_norm();
    double worst_family = 0.0;
    for (double sv : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const ScalarField fu(s.grid(), sv * ud.values(), FieldTag::density);
        const ScalarField fv(s.grid(), (1.0 - sv) * vD.values(), FieldTag::density);
        const double r = system_residual(s, fu, fv);
        cc.family_residuals.emplace_back(sv, r);
        worst_family = std::max(worst_family, r);
    }
    const bool both_stable = mu == Stability::stable && nu == Stability::stable;
    const bool certificate = cc.constant_coefficients && cc.bc_gap <= opt.bc_tol && cc.mismatch < opt.mismatch_tol &&
                             worst_family < opt.family_tol;

    if (both_stable) {
        detail::falsify(rep, "both semi-trivial states strictly stable, which the classification excludes",
                        {st_u, st_v});
        return finish(rep);
    }
    if (!certificate) {
        rep.status = ReportStatus::near_degenerate;
        rep.note = "indices in the neutral band but the continuum certificate fails";
        return finish(rep);
    }
    cc.detected = true;
    std::vector<double> coords;
    bool on_segment = true;
    for (auto& p : rep.probes) {
        const auto [sv, dist] = detail::segment_projection(p.limit, ud, vD);
        p.segment_s = sv;
        p.distance = dist;
        p.matched = dist <= tol;
        on_segment = on_segment && p.matched;
        if (p.matched && std::none_of(coords.begin(), coords.end(), [&](double q) { return std::abs(q - sv) <= tol; })) {
            coords.push_back(sv);
        }
    }
    cc.distinct_segment_points = static_cast<int>(coords.size());
    rep.probes_agree = on_segment;
    rep.predicted_attractor = "segment (s u_d, (1-s) v_D)";
    if (!on_segment) {
        detail::falsify(rep, "continuum certified but some probe converged off the steady segment",
                        detail::mismatched_limits(rep.probes));
        return finish(rep);
    }
    rep.case_label = DynamicsCase::iv;
    rep.status = ReportStatus::classified;
    rep.evidence = "verified certificate";
    // Not a unique coexistence state: the positive state slot stays empty.
    rep.positive_state.reset();
    return finish(rep);
}

}  // namespace ncl

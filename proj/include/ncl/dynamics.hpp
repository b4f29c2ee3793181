#pragma once

#include "ncl/error.hpp"
#include "ncl/spatial.hpp"
#include "ncl/system.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace ncl {

struct IntegrationOptions {
    /// Spacing of recorded states; 0 records only the endpoints.
    double output_interval = 0.0;
    /// Largest negative excursion that may be clipped to zero.
    double clip_tol = 1e-12;
    /// Overrides the automatic step when positive (still capped by it).
    double dt = 0.0;
};

struct Trajectory {
    std::vector<SystemState> states;
    /// |d/dt int u - int (u-reaction)| over the step leaving each recorded state.
    std::vector<double> mass_defect_u;
    std::vector<double> mass_defect_v;
    double dt = 0.0;
    long steps = 0;
    double max_clip = 0.0;
};

namespace detail {

struct Rhs {
    Eigen::VectorXd fu, fv;  // full right-hand sides
    Eigen::VectorXd ru, rv;  // reaction parts
};

inline void evaluate_rhs(const CompetitionSystem& s, const Eigen::VectorXd& u, const Eigen::VectorXd& v, Rhs& out) {
    const Eigen::ArrayXd ua = u.array();
    const Eigen::ArrayXd va = v.array();
    out.ru = (ua * (s.m().values().array() - s.b1().values().array() * ua - s.c().values().array() * va)).matrix();
    out.rv = (va * (s.M().values().array() - s.b().values().array() * ua - s.c2().values().array() * va)).matrix();
    out.fu.noalias() = s.op_u().matrix() * u;
    out.fu += out.ru;
    out.fv.noalias() = s.op_v().matrix() * v;
    out.fv += out.rv;
}

inline double rhs_residual(const CompetitionSystem& s, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    Rhs r;
    evaluate_rhs(s, u, v, r);
    return std::max(r.fu.cwiseAbs().maxCoeff(), r.fv.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Steady-state residual ||F(u, v)||_inf.
inline double system_residual(const CompetitionSystem& s, const ScalarField& u, const ScalarField& v) {
    return detail::rhs_residual(s, u.values(), v.values());
}

/// dt = min(0.5 / Lambda, 0.4 h^2 / ((1 - min(alpha, beta)) max(d, D))).
/// Lambda bounds the Lipschitz constant of reaction plus nonlocal absorption on the box
/// [0, box_u] x [0, box_v].
inline double stable_step(const CompetitionSystem& s, double box_u, double box_v) {
    const auto& au = s.op_u().absorption().values();
    const auto& av = s.op_v().absorption().values();
    const double du = s.op_u().rate() * s.op_u().alpha();
    const double dv = s.op_v().rate() * s.op_v().alpha();
    double lip = 1e-12;
    for (Eigen::Index i = 0; i < au.size(); ++i) {
        const double lu = du * au[i] + std::abs(s.m().values()[i]) + 2.0 * s.b1().values()[i] * box_u +
                          s.c().values()[i] * (box_v + box_u);
        const double lv = dv * av[i] + std::abs(s.M().values()[i]) + 2.0 * s.c2().values()[i] * box_v +
                          s.b().values()[i] * (box_u + box_v);
        lip = std::max({lip, lu, lv});
    }
    const double h = s.grid()->spacing();
    const double local = (1.0 - std::min(s.alpha(), s.beta())) * std::max(s.op_u().rate(), s.op_v().rate());
    const double dt = std::min(0.5 / lip, 0.4 * h * h / (local + std::numeric_limits<double>::min()));
    if (!(dt > 1e-14)) throw NumericError("time step underflow (dt = " + std::to_string(dt) + ")");
    return dt;
}

namespace detail {

/// One RK4 step in place. Returns the stage-weighted reaction integrals.
class Rk4Stepper {
public:
    Rk4Stepper(const CompetitionSystem& s, double dt, double clip_tol) : s_(s), dt_(dt), clip_tol_(clip_tol) {}

    std::pair<double, double> step(Eigen::VectorXd& u, Eigen::VectorXd& v) {
        const Grid& g = *s_.grid();
        evaluate_rhs(s_, u, v, k1_);
        evaluate_rhs(s_, u + 0.5 * dt_ * k1_.fu, v + 0.5 * dt_ * k1_.fv, k2_);
        evaluate_rhs(s_, u + 0.5 * dt_ * k2_.fu, v + 0.5 * dt_ * k2_.fv, k3_);
        evaluate_rhs(s_, u + dt_ * k3_.fu, v + dt_ * k3_.fv, k4_);
        u += (dt_ / 6.0) * (k1_.fu + 2.0 * k2_.fu + 2.0 * k3_.fu + k4_.fu);
        v += (dt_ / 6.0) * (k1_.fv + 2.0 * k2_.fv + 2.0 * k3_.fv + k4_.fv);
        clip(u);
        clip(v);
        const double react_u = integrate(g, (k1_.ru + 2.0 * k2_.ru + 2.0 * k3_.ru + k4_.ru) / 6.0);
        const double react_v = integrate(g, (k1_.rv + 2.0 * k2_.rv + 2.0 * k3_.rv + k4_.rv) / 6.0);
        return {react_u, react_v};
    }

    double max_clip() const { return max_clip_; }

private:
    void clip(Eigen::VectorXd& x) {
        const double lo = x.minCoeff();
        if (lo < 0.0) {
            max_clip_ = std::max(max_clip_, -lo);
            if (-lo > clip_tol_) {
                throw NumericError("nonnegativity clip " + std::to_string(-lo) + " exceeds tolerance: unstable step");
            }
            x = x.cwiseMax(0.0);
        }
    }

    const CompetitionSystem& s_;
    double dt_;
    double clip_tol_;
    double max_clip_ = 0.0;
    Rhs k1_, k2_, k3_, k4_;
};

inline void check_state(const CompetitionSystem& s, const SystemState& st) {
    if (!same_grid(s.grid(), st.u.grid()) || !same_grid(s.grid(), st.v.grid())) {
        throw InvalidArgument("state lives on a different grid");
    }
    if (st.u.min() < 0.0 || st.v.min() < 0.0) throw InvalidArgument("initial densities must be nonnegative");
}

inline void check_box(const Eigen::VectorXd& x, double box, const char* name) {
    if (x.maxCoeff() > box * (1.0 + 1e-9) + 1e-12) {
        throw NumericError(std::string("species ") + name + " left the invariant box");
    }
}

}  // namespace detail

/// Explicit RK4 method of lines from state0 to t_end with a fixed step.
inline Trajectory integrate(const CompetitionSystem& s, const SystemState& state0, double t_end,
                            const IntegrationOptions& opt = {}) {
    detail::check_state(s, state0);
    if (!(t_end >= state0.t)) throw InvalidArgument("t_end precedes the initial time");
    const double box_u = std::max(state0.u.sup_norm(), s.c1_u());
    const double box_v = std::max(state0.v.sup_norm(), s.c1_v());
    double dt = stable_step(s, box_u, box_v);
    if (opt.dt > 0.0) dt = std::min(dt, opt.dt);
    const double span = t_end - state0.t;
    const long n_steps = span > 0.0 ? static_cast<long>(std::ceil(span / dt)) : 0;
    if (n_steps > 0) dt = span / static_cast<double>(n_steps);
    const long every = opt.output_interval > 0.0
                           ? std::max(1L, static_cast<long>(std::llround(opt.output_interval / dt)))
                           : std::max(1L, n_steps);

    Trajectory tr;
    tr.dt = dt;
    Eigen::VectorXd u = state0.u.values();
    Eigen::VectorXd v = state0.v.values();
    const Grid& g = *s.grid();
    const GridPtr& gp = s.grid();
    detail::Rk4Stepper stepper(s, dt, opt.clip_tol);
    tr.states.push_back(state0);

    for (long k = 0; k < n_steps; ++k) {
        const bool record = (k % every == 0);
        const double mass_u0 = record ? integrate(g, u) : 0.0;
        const double mass_v0 = record ? integrate(g, v) : 0.0;
        const auto [react_u, react_v] = stepper.step(u, v);
        detail::check_box(u, box_u, "u");
        detail::check_box(v, box_v, "v");
        if (record) {
            tr.mass_defect_u.push_back(std::abs((integrate(g, u) - mass_u0) / dt - react_u));
            tr.mass_defect_v.push_back(std::abs((integrate(g, v) - mass_v0) / dt - react_v));
        }
        const bool emit = ((k + 1) % every == 0) || (k + 1 == n_steps);
        if (emit) {
            const double t = (k + 1 == n_steps) ? t_end : state0.t + dt * static_cast<double>(k + 1);
            tr.states.push_back({ScalarField(gp, u, FieldTag::density), ScalarField(gp, v, FieldTag::density), t});
        }
    }
    tr.steps = n_steps;
    tr.max_clip = stepper.max_clip();
    return tr;
}

struct SteadyMarchOptions {
    /// Target ||F||_inf relative to max(1, ||(u, v)||_inf).
    double tol = 1e-9;
    double max_time = 1e5;
    int check_every = 25;
};

struct SteadyMarch {
    SystemState state;
    double residual = 0.0;
    bool converged = false;
    long steps = 0;
};

/// Marches the system from state0 until the steady-state residual drops below tol.
inline SteadyMarch march_to_steady(const CompetitionSystem& s, const SystemState& state0,
                                   const SteadyMarchOptions& opt = {}) {
    detail::check_state(s, state0);
    const double box_u = std::max(state0.u.sup_norm(), s.c1_u());
    const double box_v = std::max(state0.v.sup_norm(), s.c1_v());
    const double dt = stable_step(s, box_u, box_v);
    Eigen::VectorXd u = state0.u.values();
    Eigen::VectorXd v = state0.v.values();
    detail::Rk4Stepper stepper(s, dt, IntegrationOptions{}.clip_tol);
    SteadyMarch out;
    double t = state0.t;
    for (long k = 0;; ++k) {
        if (k % opt.check_every == 0) {
            const double scale = std::max({1.0, u.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff()});
            out.residual = detail::rhs_residual(s, u, v);
            if (out.residual < opt.tol * scale) {
                out.converged = true;
                break;
            }
            if (t - state0.t >= opt.max_time) break;
        }
        stepper.step(u, v);
        detail::check_box(u, box_u, "u");
        detail::check_box(v, box_v, "v");
        t += dt;
        out.steps = k + 1;
    }
    const GridPtr& gp = s.grid();
    out.state = {ScalarField(gp, std::move(u), FieldTag::density), ScalarField(gp, std::move(v), FieldTag::density), t};
    return out;
}

}  // namespace ncl

#pragma once

#include "ncl/dispersal.hpp"
#include "ncl/error.hpp"
#include "ncl/spatial.hpp"
#include "ncl/spectral.hpp"

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>

namespace ncl {

/// Logistic reaction f(x,u) = u (growth(x) - self_regulation(x) u).
///
/// f(x,0) = 0 and f_u(x,0) = growth. f/u is strictly decreasing exactly when the
/// self-regulation is positive; validate() checks this by sampling.
class ReactionSpec {
public:
    ReactionSpec() = default;
    ReactionSpec(ScalarField growth, ScalarField self_regulation)
        : growth_(std::move(growth)), self_(std::move(self_regulation)) {
        require_same_grid(growth_, self_);
    }

    static ReactionSpec logistic(const ScalarField& growth) {
        return {growth, ScalarField::constant(growth.grid(), 1.0)};
    }

    const ScalarField& growth() const { return growth_; }
    const ScalarField& self_regulation() const { return self_; }
    const GridPtr& grid() const { return growth_.grid(); }

    double value(std::size_t i, double u) const { return u * per_capita(i, u); }
    double per_capita(std::size_t i, double u) const { return growth_[i] - self_[i] * u; }
    double derivative(std::size_t i, double u) const { return growth_[i] - 2.0 * self_[i] * u; }

    Eigen::VectorXd value(const Eigen::VectorXd& u) const {
        return (u.array() * (growth_.values().array() - self_.values().array() * u.array())).matrix();
    }
    Eigen::VectorXd derivative(const Eigen::VectorXd& u) const {
        return (growth_.values().array() - 2.0 * self_.values().array() * u.array()).matrix();
    }
    /// f_u(., 0).
    const ScalarField& derivative_at_zero() const { return growth_; }

    /// Samples the structural hypotheses on a 32-point ladder in (0, u_max] per node:
    /// f(x,0) = 0 and f(x,u)/u strictly decreasing.
    void validate(double u_max) const {
        constexpr int kLadder = 32;
        for (std::size_t i = 0; i < growth_.size(); ++i) {
            if (value(i, 0.0) != 0.0) throw InvalidArgument("reaction must vanish at u = 0");
            double prev = per_capita(i, u_max / kLadder);
            for (int k = 2; k <= kLadder; ++k) {
                const double u = u_max * k / kLadder;
                const double cur = value(i, u) / u;
                if (!(cur < prev)) {
                    throw InvalidArgument("f(x,u)/u is not strictly decreasing at node " + std::to_string(i));
                }
                prev = cur;
            }
        }
    }

private:
    ScalarField growth_;
    ScalarField self_;
};

/// Smallest C (doubling bracket, then bisection) with
///   d alpha sum_j k_ij w_j + f(x_i, C)/C <= 0   at every node.
/// Every constant at or above the result is an upper solution.
inline double compute_C1(const DispersalOperator& op, const ReactionSpec& reaction) {
    if (!same_grid(op.grid(), reaction.grid())) throw InvalidArgument("reaction and operator live on different grids");
    const Eigen::VectorXd inflow = op.inflow_mass();
    auto ok = [&](double c) {
        for (std::size_t i = 0; i < op.size(); ++i) {
            if (inflow[static_cast<Eigen::Index>(i)] + reaction.value(i, c) / c > 0.0) return false;
        }
        return true;
    };
    constexpr double kCap = 1e12;
    constexpr double kFloor = 1e-12;
    double hi = 1.0;
    double lo = 0.0;
    if (ok(hi)) {
        while (hi > kFloor && ok(0.5 * hi)) hi *= 0.5;
        lo = 0.5 * hi;
        if (hi <= kFloor) return hi;
    } else {
        while (!ok(hi)) {
            lo = hi;
            hi *= 2.0;
            if (hi > kCap) throw NumericError("no upper-solution constant below 1e12: reaction is not dissipative");
        }
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (ok(mid) ? hi : lo) = mid;
    }
    return hi;
}

struct SteadyStateResult {
    bool exists = false;
    ScalarField profile;
    ScalarField upper_limit;
    ScalarField lower_limit;
    double residual = 0.0;
    int iterations = 0;
    double lambda_star = 0.0;
    double c1 = 0.0;
    bool newton_polished = false;
};

struct SteadyStateOptions {
    double existence_tol = 1e-8;
    double residual_tol = 1e-10;  // relative to max(1, ||profile||)
    double gap_tol = 1e-8;
    double newton_handoff = 1e-6;  // relative residual below which Newton takes over
    double monotone_slack = 1e-12;
    long max_steps = 2'000'000;
    int check_every = 10;
};

namespace detail {

inline Eigen::VectorXd single_rhs(const DispersalOperator& op, const ReactionSpec& reaction, const Eigen::VectorXd& u) {
    Eigen::VectorXd r = op.matrix() * u;
    r += reaction.value(u);
    return r;
}

/// Step size making u -> u + dt (Lu + f(u)) order preserving on [0, box].
inline double monotone_step(const DispersalOperator& op, const ReactionSpec& reaction, double box) {
    double lip = 1e-12;
    for (std::size_t i = 0; i < op.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double diag = std::max(0.0, -op.matrix()(k, k));
        lip = std::max(lip, diag + std::abs(reaction.growth()[i]) + 2.0 * std::abs(reaction.self_regulation()[i]) * box);
    }
    return 0.9 / lip;
}

/// Newton on L u + f(u) = 0. Returns nullopt when the iteration does not converge cleanly.
inline std::optional<Eigen::VectorXd> newton_single(const DispersalOperator& op, const ReactionSpec& reaction,
                                                    Eigen::VectorXd u, double target) {
    double res = single_rhs(op, reaction, u).cwiseAbs().maxCoeff();
    for (int it = 0; it < 25; ++it) {
        if (res <= target) return u;
        Eigen::MatrixXd jac = op.matrix();
        jac.diagonal() += reaction.derivative(u);
        const Eigen::VectorXd step = jac.partialPivLu().solve(-single_rhs(op, reaction, u));
        if (!step.allFinite()) return std::nullopt;
        Eigen::VectorXd next = u + step;
        const double next_res = single_rhs(op, reaction, next).cwiseAbs().maxCoeff();
        if (!(next_res < res) && next_res > target) return std::nullopt;
        u = std::move(next);
        res = next_res;
    }
    return res <= target ? std::optional<Eigen::VectorXd>(u) : std::nullopt;
}

}  // namespace detail

struct MarchResult {
    ScalarField profile;
    double residual = 0.0;
    long steps = 0;
    double time = 0.0;
    bool converged = false;
};

/// Explicit order-preserving time marching of u_t = L u + f(u) from u0 until the
/// residual drops below `tol` (absolute) or `max_time` is reached.
inline MarchResult march_single(const DispersalOperator& op, const ReactionSpec& reaction, const ScalarField& u0,
                                double tol, double max_time) {
    if (!same_grid(op.grid(), u0.grid())) throw InvalidArgument("initial field lives on a different grid");
    if (u0.min() < 0.0) throw InvalidArgument("initial density must be nonnegative");
    const double box = std::max(u0.sup_norm(), compute_C1(op, reaction));
    const double dt = detail::monotone_step(op, reaction, box);
    Eigen::VectorXd u = u0.values();
    MarchResult out;
    for (;;) {
        const Eigen::VectorXd r = detail::single_rhs(op, reaction, u);
        out.residual = r.cwiseAbs().maxCoeff();
        if (out.residual < tol) {
            out.converged = true;
            break;
        }
        if (out.time >= max_time) break;
        u += dt * r;
        u = u.cwiseMax(0.0);
        out.time += dt;
        ++out.steps;
    }
    out.profile = ScalarField(op.grid(), std::move(u), FieldTag::density);
    return out;
}

/// Positive steady state of L u + f(u) = 0 by monotone upper/lower orbits.
///
/// Existence is decided by the sign of the principal bound of L + f_u(.,0). When it
/// is positive, a decreasing orbit starts from the constant C1 and an increasing orbit
/// starts from delta * phi (phi the Perron eigenfunction, delta halved until delta * phi
/// verifies as a lower solution). Both are marched by the order-preserving Euler map,
/// with order checked every step, until they meet.
inline SteadyStateResult solve_steady_monotone(const DispersalOperator& op, const ReactionSpec& reaction,
                                               const SteadyStateOptions& opt = {}) {
    if (!same_grid(op.grid(), reaction.grid())) throw InvalidArgument("reaction and operator live on different grids");
    SteadyStateResult out;
    const GridPtr& grid = op.grid();
    const auto n = static_cast<Eigen::Index>(op.size());

    const SpectralResult principal = spectral_bound(op, reaction.derivative_at_zero());
    out.lambda_star = principal.lambda;
    out.c1 = compute_C1(op, reaction);
    reaction.validate(out.c1);

    if (!(principal.lambda > opt.existence_tol)) {
        out.exists = false;
        const ScalarField zero = ScalarField::constant(grid, 0.0, FieldTag::density);
        out.profile = out.upper_limit = out.lower_limit = zero;
        out.residual = 0.0;
        return out;
    }

    Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, out.c1);
    const Eigen::VectorXd& phi = principal.eigenfunction.values();
    double delta = out.c1;
    Eigen::VectorXd lower;
    for (int halvings = 0;; ++halvings) {
        if (halvings > 80) throw NumericError("could not construct a lower solution from the Perron eigenfunction");
        lower = delta * phi;
        if (detail::single_rhs(op, reaction, lower).minCoeff() >= 0.0 && (lower.array() <= upper.array()).all()) break;
        delta *= 0.5;
    }

    const double dt = detail::monotone_step(op, reaction, out.c1);
    const double slack = opt.monotone_slack * std::max(1.0, out.c1);
    bool newton_allowed = true;
    long step = 0;
    for (;; ++step) {
        if (step % opt.check_every == 0) {
            const double scale = std::max(1.0, upper.cwiseAbs().maxCoeff());
            const double ru = detail::single_rhs(op, reaction, upper).cwiseAbs().maxCoeff();
            const double rl = detail::single_rhs(op, reaction, lower).cwiseAbs().maxCoeff();
            const double gap = (upper - lower).cwiseAbs().maxCoeff();
            if (std::max(ru, rl) < opt.residual_tol * scale && gap < opt.gap_tol) break;
            if (newton_allowed && gap < 1e-3 * scale && std::max(ru, rl) < opt.newton_handoff * scale) {
                const double target = 1e-3 * opt.residual_tol * scale;
                auto pu = detail::newton_single(op, reaction, upper, target);
                auto pl = detail::newton_single(op, reaction, lower, target);
                if (pu && pl && pu->minCoeff() > 0.0 && pl->minCoeff() > 0.0) {
                    upper = std::move(*pu);
                    lower = std::move(*pl);
                    out.newton_polished = true;
                    const double new_gap = (upper - lower).cwiseAbs().maxCoeff();
                    if (new_gap < opt.gap_tol) break;
                }
                newton_allowed = false;
            }
        }
        if (step >= opt.max_steps) {
            throw NumericError("sandwich gap stagnated: " +
                               std::to_string((upper - lower).cwiseAbs().maxCoeff()) + " after " +
                               std::to_string(step) + " steps");
        }
        Eigen::VectorXd next_upper = upper + dt * detail::single_rhs(op, reaction, upper);
        Eigen::VectorXd next_lower = lower + dt * detail::single_rhs(op, reaction, lower);
        if ((next_upper.array() > upper.array() + slack).any()) {
            throw NumericError("upper orbit increased: time step failed to preserve order");
        }
        if ((next_lower.array() < lower.array() - slack).any()) {
            throw NumericError("lower orbit decreased: time step failed to preserve order");
        }
        if ((next_lower.array() > next_upper.array() + slack).any()) {
            throw NumericError("lower orbit crossed the upper orbit");
        }
        upper = std::move(next_upper);
        lower = std::move(next_lower);
    }

    const double ru = detail::single_rhs(op, reaction, upper).cwiseAbs().maxCoeff();
    const double rl = detail::single_rhs(op, reaction, lower).cwiseAbs().maxCoeff();
    out.exists = true;
    out.iterations = static_cast<int>(step);
    out.residual = std::min(ru, rl);
    Eigen::VectorXd profile = (ru <= rl) ? upper : lower;
    out.upper_limit = ScalarField(grid, std::move(upper), FieldTag::density);
    out.lower_limit = ScalarField(grid, std::move(lower), FieldTag::density);
    if (profile.minCoeff() <= 0.0) throw NumericError("steady profile is not strictly positive");
    out.profile = ScalarField(grid, std::move(profile), FieldTag::density);
    return out;
}

struct WEpsResult {
    ScalarField profile;
    int iterations = 0;
    bool used_fallback = false;
};

/// Positive steady state of w_t = L w + w (m - eps - s w) through the root formula
///   w = ( g + sqrt(g^2 + 4 s q) ) / (2 s),   g = m - eps + diag(L),  q = offdiag(L) w,
/// iterated with q frozen per sweep. The sweep map is monotone, so starting from the
/// upper constant C1 it decreases to the maximal (positive) fixed point.
inline WEpsResult w_eps_fixed_point(const DispersalOperator& op, const ScalarField& m, double eps,
                                    double self_regulation = 1.0, int max_sweeps = 200000) {
    if (!same_grid(op.grid(), m.grid())) throw InvalidArgument("growth lives on a different grid");
    if (!(self_regulation > 0.0)) throw InvalidArgument("self-regulation must be positive");
    const GridPtr& grid = op.grid();
    const Eigen::VectorXd depressed_values = m.values().array() - eps;
    const ScalarField depressed(grid, depressed_values);
    const ReactionSpec reaction(depressed, ScalarField::constant(grid, self_regulation));

    const SpectralResult principal = spectral_bound(op, depressed);
    if (!(principal.lambda > SteadyStateOptions{}.existence_tol)) {
        throw NonexistenceError("depressed logistic has no positive steady state (principal bound " +
                                std::to_string(principal.lambda) + ")");
    }

    const Eigen::MatrixXd& a = op.matrix();
    Eigen::MatrixXd off = a;
    off.diagonal().setZero();
    const Eigen::ArrayXd g = depressed_values.array() + a.diagonal().array();
    const double s = self_regulation;

    WEpsResult out;
    Eigen::VectorXd w = Eigen::VectorXd::Constant(a.rows(), compute_C1(op, reaction));
    bool ok = false;
    for (int it = 1; it <= max_sweeps; ++it) {
        const Eigen::ArrayXd q = (off * w).array();
        const Eigen::ArrayXd disc = g.square() + 4.0 * s * q;
        if ((disc < 0.0).any()) break;
        const Eigen::ArrayXd root = disc.sqrt();
        // Cancellation-free branch for g < 0.
        Eigen::VectorXd next = (g >= 0.0).select((g + root) / (2.0 * s), (2.0 * q) / (root - g)).matrix();
        const double change = (next - w).cwiseAbs().maxCoeff();
        w = std::move(next);
        out.iterations = it;
        if (change <= 4e-15 * std::max(1.0, w.cwiseAbs().maxCoeff())) {
            ok = true;
            break;
        }
    }
    const double scale = std::max(1.0, w.cwiseAbs().maxCoeff());
    if (ok && w.allFinite() && w.minCoeff() > 0.0 &&
        detail::single_rhs(op, reaction, w).cwiseAbs().maxCoeff() <= 1e-10 * scale) {
        out.profile = ScalarField(grid, std::move(w), FieldTag::density);
        return out;
    }
    out.used_fallback = true;
    out.profile = solve_steady_monotone(op, reaction).profile;
    return out;
}

}  // namespace ncl

#pragma once

#include "ncl/dispersal.hpp"
#include "ncl/error.hpp"
#include "ncl/spatial.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

namespace ncl {

// Integral functionals from the uniqueness/nonexistence arguments, evaluated on
// discrete fields. Double sums go through pairwise summation.

enum class SignClaim { nonpositive, nonnegative, zero, none };

inline std::string_view to_string(SignClaim s) {
    switch (s) {
        case SignClaim::nonpositive: return "nonpositive";
        case SignClaim::nonnegative: return "nonnegative";
        case SignClaim::zero: return "zero";
        case SignClaim::none: return "none";
    }
    return "?";
}

struct OracleReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double difference = 0.0;  // lhs - rhs
    double scale = 1.0;       // magnitude used for relative tolerances
    double tolerance = 0.0;   // allowed |difference| / scale
    SignClaim sign_claim = SignClaim::none;
    bool sign_satisfied = true;
    bool agrees = true;

    bool passed() const { return sign_satisfied && agrees; }
};

inline constexpr double kDensityFloor = 1e-12;
inline constexpr double kSignTol = 1e-10;

namespace detail {

inline void require_positive(const ScalarField& f, std::string_view what) {
    if (!(f.min() > kDensityFloor)) {
        throw InvalidArgument(std::string(what) + " must be strictly positive (floor 1e-12)");
    }
}

inline SignClaim order_claim(const ScalarField& u, const ScalarField& u_star) {
    // Every summand keeps its sign as long as the order is weak and not an equality.
    const Eigen::ArrayXd d = u.values().array() - u_star.values().array();
    if ((d >= 0.0).all() && (d > 0.0).any()) return SignClaim::nonpositive;
    if ((d <= 0.0).all() && (d < 0.0).any()) return SignClaim::nonnegative;
    return SignClaim::none;
}

inline bool sign_ok(SignClaim claim, double value, double slack) {
    switch (claim) {
        case SignClaim::nonpositive: return value <= slack;
        case SignClaim::nonnegative: return value >= -slack;
        case SignClaim::zero: return std::abs(value) <= slack;
        case SignClaim::none: return true;
    }
    return true;
}

inline void finish(OracleReport& r, double value_for_sign) {
    r.difference = r.lhs - r.rhs;
    r.agrees = std::abs(r.difference) <= r.tolerance * r.scale;
    r.sign_satisfied = sign_ok(r.sign_claim, value_for_sign, kSignTol * r.scale);
}

/// (d/2) sum_ij k_ij w_i w_j [s_i u_j - u_i s_j]^2 (1/(u_i u_j) - 1/(s_i s_j)) and the
/// sum of the absolute summands.
inline std::pair<double, double> symmetric_double_sum(const KernelMatrix& kernel, double d,
                                                      const Eigen::VectorXd& u, const Eigen::VectorXd& s) {
    const auto& w = kernel.grid()->weights();
    const Eigen::Index n = u.size();
    std::vector<double> terms;
    std::vector<double> mags;
    terms.reserve(static_cast<std::size_t>(n * n));
    mags.reserve(static_cast<std::size_t>(n * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double cross = s[i] * u[j] - u[i] * s[j];
            const double t = kernel(i, j) * w[i] * w[j] * cross * cross * (1.0 / (u[i] * u[j]) - 1.0 / (s[i] * s[j]));
            terms.push_back(t);
            mags.push_back(std::abs(t));
        }
    }
    return {0.5 * d * pairwise_sum(terms), 0.5 * std::abs(d) * pairwise_sum(mags)};
}

/// d * integral of (-u L[s] + s L[u]) (u - s)^2 / (u s), with L given as a matrix.
inline std::pair<double, double> direct_cross_form(const Grid& grid, const Eigen::MatrixXd& op, double d,
                                                   const Eigen::VectorXd& u, const Eigen::VectorXd& s) {
    const Eigen::VectorXd lu = op * u;
    const Eigen::VectorXd ls = op * s;
    const Eigen::ArrayXd gap2 = (u - s).array().square() / (u.array() * s.array());
    const Eigen::ArrayXd w = grid.weights().array();
    const Eigen::VectorXd terms = (d * w * (-u.array() * ls.array() + s.array() * lu.array()) * gap2).matrix();
    const Eigen::VectorXd mags = (std::abs(d) * w * (u.array() * ls.array().abs() + s.array() * lu.array().abs()) * gap2).matrix();
    return {pairwise_sum(terms), pairwise_sum(mags)};
}

}  // namespace detail

/// Cross form of the nonlocal operator against its symmetrized double sum.
///
///   lhs = d int (-u K[u*] + u* K[u]) (u - u*)^2 / (u u*)
///   rhs = (d/2) sum_ij k_ij w_i w_j [u*_i u_j - u_i u*_j]^2 (1/(u_i u_j) - 1/(u*_i u*_j))
///
/// Exact finite-sum identity for symmetric kernels. rhs <= 0 when u > u*, >= 0 when u < u*.
inline OracleReport symmetrization_identity(const KernelMatrix& kernel, double d, const ScalarField& u,
                                            const ScalarField& u_star) {
    if (!kernel.symmetric()) throw InvalidArgument("symmetrization identity requires a symmetric kernel");
    require_same_grid(u, u_star);
    if (!same_grid(u.grid(), kernel.grid())) throw InvalidArgument("fields and kernel live on different grids");
    detail::require_positive(u, "u");
    detail::require_positive(u_star, "u_star");

    // Type-N operator; the absorption term cancels in the cross form.
    Eigen::MatrixXd op = kernel.entries() * kernel.grid()->weights().asDiagonal();
    op.diagonal() -= kernel.column_mass();

    OracleReport r;
    r.name = "symmetrization_identity";
    const auto [lhs, lhs_mag] = detail::direct_cross_form(*kernel.grid(), op, d, u.values(), u_star.values());
    const auto [rhs, rhs_mag] = detail::symmetric_double_sum(kernel, d, u.values(), u_star.values());
    r.lhs = lhs;
    r.rhs = rhs;
    r.scale = std::max({lhs_mag, rhs_mag, 1e-300});
    r.tolerance = 1e-12;
    r.sign_claim = detail::order_claim(u, u_star);
    detail::finish(r, rhs);
    return r;
}

struct SignFunctionals {
    double w_u = 0.0;  // int (b1 w + c z) w^2
    double w_v = 0.0;  // int (b w + c2 z) z^2
};

/// w = u - u*, z = v - v*.
inline SignFunctionals sign_functional_W(const ScalarField& u, const ScalarField& u_star, const ScalarField& v,
                                         const ScalarField& v_star, const ScalarField& b1, const ScalarField& c,
                                         const ScalarField& b, const ScalarField& c2) {
    for (const ScalarField* f : {&u_star, &v, &v_star, &b1, &c, &b, &c2}) require_same_grid(u, *f);
    const Eigen::ArrayXd w = u.values().array() - u_star.values().array();
    const Eigen::ArrayXd z = v.values().array() - v_star.values().array();
    const Grid& g = *u.grid();
    SignFunctionals out;
    out.w_u = integrate(g, ((b1.values().array() * w + c.values().array() * z) * w.square()).matrix());
    out.w_v = integrate(g, ((b.values().array() * w + c2.values().array() * z) * z.square()).matrix());
    return out;
}

/// int (w + c z)^2 (c z - w). Requires b c <= 1.
inline double key_relation(const ScalarField& w, const ScalarField& z, double b, double c) {
    require_same_grid(w, z);
    if (!(b * c <= 1.0 + 1e-12)) throw InvalidArgument("key relation requires b c <= 1");
    const Eigen::ArrayXd s = w.values().array() + c * z.values().array();
    const Eigen::ArrayXd t = c * z.values().array() - w.values().array();
    return integrate(*w.grid(), (s.square() * t).matrix());
}

struct NeutralFunctionals {
    double i1 = 0.0;    // int (v_D^3 - b u_d v_D^2)
    double i2 = 0.0;    // int (u_d^3 - c v_D u_d^2)
    double ikey = 0.0;  // int (b u_d - v_D)^2 (b u_d + v_D)
    double scale = 1.0;
    /// b^3 I2 + I1 >= Ikey (needs b c <= 1).
    bool chain_holds = true;
};

inline NeutralFunctionals neutral_case_functionals(const ScalarField& u_d, const ScalarField& v_D, double b, double c) {
    require_same_grid(u_d, v_D);
    const Eigen::ArrayXd u = u_d.values().array();
    const Eigen::ArrayXd v = v_D.values().array();
    const Grid& g = *u_d.grid();
    NeutralFunctionals out;
    out.i1 = integrate(g, (v.cube() - b * u * v.square()).matrix());
    out.i2 = integrate(g, (u.cube() - c * v * u.square()).matrix());
    out.ikey = integrate(g, ((b * u - v).square() * (b * u + v)).matrix());
    out.scale = std::max(1.0, integrate(g, ((b * u).cube() + v.cube()).matrix()));
    out.chain_holds = (b * c > 1.0 + 1e-12) || (b * b * b * out.i2 + out.i1 >= out.ikey - 1e-10 * out.scale);
    return out;
}

namespace detail {

/// Node gradient: central in the interior, second-order one-sided at the ends.
inline Eigen::VectorXd node_gradient(const Grid& grid, const Eigen::VectorXd& u) {
    const Eigen::Index n = u.size();
    const double h = grid.spacing();
    Eigen::VectorXd g(n);
    g[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    g[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    for (Eigen::Index i = 1; i + 1 < n; ++i) g[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    return g;
}

}  // namespace detail

/// Mixed-dispersal cross form.
///
///   lhs (direct) = d int (-u K_a[u^] + u^ K_a[u]) w^2 / (u u^),  K_a the assembled mixed operator
///   rhs (split)  = alpha-weighted kernel double sum
///                + d (1-alpha) int |u grad u^ - u^ grad u|^2 (1/u^2 - 1/u^^2)
///
/// The gradient term is a discretization, so agreement is O(h^2), not exact.
inline OracleReport mixed_quadratic_form(const DispersalOperator& op, const ScalarField& u, const ScalarField& u_hat) {
    if (op.kind() != DispersalKind::mixed) throw InvalidArgument("mixed_quadratic_form requires a mixed operator");
    if (!op.symmetric_kernel()) throw InvalidArgument("mixed_quadratic_form requires a symmetric kernel");
    require_same_grid(u, u_hat);
    if (!same_grid(u.grid(), op.grid())) throw InvalidArgument("fields and operator live on different grids");
    detail::require_positive(u, "u");
    detail::require_positive(u_hat, "u_hat");
    const Grid& grid = op.grid_ref();
    const double d = op.rate();

    // op.matrix() already carries the rate; use unit d in the direct form.
    const auto [direct, direct_mag] = detail::direct_cross_form(grid, op.matrix(), 1.0, u.values(), u_hat.values());
    const auto [kernel_part, kernel_mag] =
        detail::symmetric_double_sum(op.kernel(), d * op.alpha(), u.values(), u_hat.values());

    const Eigen::VectorXd gu = detail::node_gradient(grid, u.values());
    const Eigen::VectorXd gh = detail::node_gradient(grid, u_hat.values());
    const Eigen::ArrayXd cross = u.values().array() * gh.array() - u_hat.values().array() * gu.array();
    const Eigen::ArrayXd factor = 1.0 / u.values().array().square() - 1.0 / u_hat.values().array().square();
    const double local = d * op.local_weight() * integrate(grid, (cross.square() * factor).matrix());
    const double local_mag = std::abs(d * op.local_weight()) * integrate(grid, (cross.square() * factor.abs()).matrix());

    OracleReport r;
    r.name = "mixed_quadratic_form";
    r.lhs = direct;
    r.rhs = kernel_part + local;
    r.scale = std::max({direct_mag, kernel_mag + local_mag, 1e-300});
    // Exact when alpha = 1; otherwise a loose O(h^2) band.
    r.tolerance = op.local_weight() > 0.0 ? 10.0 * grid.spacing() * grid.spacing() : 1e-12;
    r.sign_claim = detail::order_claim(u, u_hat);
    detail::finish(r, r.rhs);
    return r;
}

}  // namespace ncl

#pragma once

#include "ncl/dispersal.hpp"
#include "ncl/error.hpp"
#include "ncl/spatial.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace ncl {

enum class SpectralMethod { rayleigh_symmetric, perron_power };

inline std::string_view to_string(SpectralMethod m) {
    return m == SpectralMethod::rayleigh_symmetric ? "rayleigh_symmetric" : "perron_power";
}

/// Principal spectral bound of the discretized operator L + diag(V).
///
/// This is the Perron root of a finite matrix. The discrete problem always has a
/// principal eigenpair even where the continuum operator has none.
struct SpectralResult {
    static constexpr std::string_view kCaveat =
        "discrete Perron root; the continuum operator may lack a principal eigenvalue";

    double lambda = 0.0;
    ScalarField eigenfunction;
    SpectralMethod method = SpectralMethod::rayleigh_symmetric;
    int iterations = 0;
    double residual = 0.0;
};

struct PowerIterationOptions {
    int max_iterations = 50000;
    double tolerance = 1e-12;
    int square_every = 2000;
    int max_squarings = 12;
};

namespace detail {

inline Eigen::MatrixXd operator_plus_potential(const DispersalOperator& op, const ScalarField& potential) {
    if (!same_grid(op.grid(), potential.grid())) throw InvalidArgument("potential lives on a different grid");
    Eigen::MatrixXd m = op.matrix();
    m.diagonal() += potential.values();
    return m;
}

inline double eigen_residual(const Eigen::MatrixXd& m, const Eigen::VectorXd& phi, double lambda) {
    return (m * phi - lambda * phi).cwiseAbs().maxCoeff();
}

/// Strong connectivity of the off-diagonal nonzero pattern.
inline bool irreducible(const Eigen::MatrixXd& m) {
    const Eigen::Index n = m.rows();
    if (n <= 1) return true;
    auto reach_all = [&](bool transpose) {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::vector<Eigen::Index> stack{0};
        seen[0] = 1;
        Eigen::Index count = 1;
        while (!stack.empty()) {
            const Eigen::Index i = stack.back();
            stack.pop_back();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i || seen[static_cast<std::size_t>(j)]) continue;
                const double entry = transpose ? m(j, i) : m(i, j);
                if (entry != 0.0) {
                    seen[static_cast<std::size_t>(j)] = 1;
                    ++count;
                    stack.push_back(j);
                }
            }
        }
        return count == n;
    };
    return reach_all(false) && reach_all(true);
}

inline void require_irreducible(const Eigen::MatrixXd& m) {
    if (!irreducible(m)) {
        throw ReducibleMatrixError(
            "operator matrix is reducible: kernel support does not connect the grid, no positive Perron vector");
    }
}

inline Eigen::VectorXd normalize_positive(Eigen::VectorXd v) {
    if (v.sum() < 0.0) v = -v;
    v /= v.cwiseAbs().maxCoeff();
    return v;
}

}  // namespace detail

/// Symmetric-kernel route: the largest eigenvalue of W^{1/2}(L+V)W^{-1/2}, which is
/// the maximum of the weighted Rayleigh quotient <phi,(L+V)phi>_w / <phi,phi>_w.
inline SpectralResult rayleigh_symmetric(const DispersalOperator& op, const ScalarField& potential) {
    if (!op.weighted_symmetric()) throw InvalidArgument("rayleigh_symmetric requires a symmetric kernel");
    const Eigen::MatrixXd full = detail::operator_plus_potential(op, potential);
    detail::require_irreducible(full);

    const Eigen::ArrayXd sw = op.grid_ref().weights().array().sqrt();
    Eigen::MatrixXd s = sw.matrix().asDiagonal() * full * sw.inverse().matrix().asDiagonal();
    s = 0.5 * (s + s.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
    if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed to converge");
    const Eigen::Index top = s.rows() - 1;
    const double lambda = solver.eigenvalues()[top];
    Eigen::VectorXd phi = solver.eigenvectors().col(top).array() / sw;
    phi = detail::normalize_positive(std::move(phi));
    if (phi.minCoeff() <= 0.0) throw NumericError("principal eigenvector is not strictly positive");

    SpectralResult r;
    r.lambda = lambda;
    r.method = SpectralMethod::rayleigh_symmetric;
    r.iterations = 1;
    r.residual = detail::eigen_residual(full, phi, lambda);
    r.eigenfunction = ScalarField(op.grid(), std::move(phi));
    return r;
}

/// General route: power iteration on the shifted nonnegative matrix B = L + V + sigma I,
/// sigma = max_i(-(L+V)_ii) + 1. Stops when the Collatz-Wielandt bracket
/// [min_i (Bx)_i/x_i, max_i (Bx)_i/x_i] around the Perron root closes. When the bracket
/// stalls (small spectral gap) the iteration matrix is squared, which squares the gap ratio;
/// B^p stays nonnegative so the bracket remains valid for rho(B)^p.
inline SpectralResult perron_power(const DispersalOperator& op, const ScalarField& potential,
                                   const PowerIterationOptions& options = {}) {
    Eigen::MatrixXd b = detail::operator_plus_potential(op, potential);
    detail::require_irreducible(b);
    const double shift = (-b.diagonal()).maxCoeff() + 1.0;
    b.diagonal().array() += shift;
    const Eigen::MatrixXd base = b;

    const Eigen::Index n = b.rows();
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd y(n);
    // rho(base) = scale * rho(b)^(1/power).
    double scale = 1.0;
    double power = 1.0;
    double lo = 0.0;
    double hi = 0.0;
    int it = 0;
    int squarings = 0;
    bool converged = false;
    for (it = 1; it <= options.max_iterations; ++it) {
        y.noalias() = b * x;
        const Eigen::ArrayXd ratio = y.array() / x.array();
        lo = scale * std::pow(ratio.minCoeff(), 1.0 / power);
        hi = scale * std::pow(ratio.maxCoeff(), 1.0 / power);
        x = y / y.maxCoeff();
        if (hi - lo <= options.tolerance * std::max(1.0, std::abs(hi))) {
            converged = true;
            break;
        }
        if (it % options.square_every == 0 && squarings < options.max_squarings) {
            const double s = b.maxCoeff();
            b = (b / s) * (b / s);
            scale *= std::pow(s, 1.0 / power);
            power *= 2.0;
            ++squarings;
        }
    }
    const double rho = 0.5 * (lo + hi);
    const Eigen::MatrixXd full = base - shift * Eigen::MatrixXd::Identity(n, n);
    const double lambda = rho - shift;
    const double residual = detail::eigen_residual(full, x, lambda);
    if (!converged) {
        throw NumericError("power iteration did not converge in " + std::to_string(options.max_iterations) +
                           " iterations (bracket width " + std::to_string(hi - lo) + ", residual " +
                           std::to_string(residual) + ")");
    }
    SpectralResult r;
    r.lambda = lambda;
    r.method = SpectralMethod::perron_power;
    r.iterations = it;
    r.residual = residual;
    r.eigenfunction = ScalarField(op.grid(), std::move(x));
    return r;
}

/// Largest real spectral value of L + diag(V). Symmetric kernels use the Rayleigh route.
inline SpectralResult spectral_bound(const DispersalOperator& op, const ScalarField& potential) {
    if (op.weighted_symmetric()) return rayleigh_symmetric(op, potential);
    return perron_power(op, potential);
}

enum class Stability { unstable, stable, neutral };

inline std::string_view to_string(Stability s) {
    switch (s) {
        case Stability::unstable: return "unstable";
        case Stability::stable: return "stable";
        case Stability::neutral: return "neutral";
    }
    return "?";
}

struct StabilityVerdict {
    Stability sign = Stability::neutral;
    double lambda = 0.0;
    double tolerance = 0.0;
};

inline constexpr double kNeutralRelTol = 1e-8;

/// Sign of a stability index with the neutral band |lambda| <= rel_tol * scale.
inline StabilityVerdict classify_stability(double lambda, double scale, double rel_tol = kNeutralRelTol) {
    if (!(scale > 0.0)) throw InvalidArgument("stability scale must be positive");
    const double tol = rel_tol * scale;
    StabilityVerdict v{Stability::neutral, lambda, tol};
    if (lambda > tol) v.sign = Stability::unstable;
    else if (lambda < -tol) v.sign = Stability::stable;
    return v;
}

}  // namespace ncl

#pragma once

#include "ncl/error.hpp"
#include "ncl/spatial.hpp"

#include <Eigen/Core>

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ncl {

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

struct GaussianKernel {
    double sigma;
};

struct TophatKernel {
    double radius;
};

/// Explicit kernel values k(x_i, x_j) on a specific grid.
struct TableKernel {
    Eigen::MatrixXd values;
};

/// A dispersal kernel normalized over the whole line (no re-normalization over the domain).
struct KernelSpec {
    std::variant<GaussianKernel, TophatKernel, TableKernel> family;

    static KernelSpec gaussian(double sigma) { return {GaussianKernel{sigma}}; }
    static KernelSpec tophat(double radius) { return {TophatKernel{radius}}; }
    static KernelSpec table(Eigen::MatrixXd values) { return {TableKernel{std::move(values)}}; }

    std::string_view family_name() const {
        if (std::holds_alternative<GaussianKernel>(family)) return "gaussian";
        if (std::holds_alternative<TophatKernel>(family)) return "tophat";
        return "table";
    }

    /// Width parameter (sigma or radius); 0 for tables.
    double parameter() const {
        if (auto g = std::get_if<GaussianKernel>(&family)) return g->sigma;
        if (auto t = std::get_if<TophatKernel>(&family)) return t->radius;
        return 0.0;
    }

    /// Analytic value for the parametric families.
    double evaluate(double x, double y) const {
        if (auto g = std::get_if<GaussianKernel>(&family)) {
            const double r = (x - y) / g->sigma;
            return std::exp(-0.5 * r * r) / (std::sqrt(2.0 * std::numbers::pi) * g->sigma);
        }
        if (auto t = std::get_if<TophatKernel>(&family)) {
            // Midpoint value on the jump, so a radius that is a multiple of the
            // spacing integrates to exactly 1 under the trapezoid rule.
            const double r = std::abs(x - y);
            const double edge = 1e-12 * t->radius;
            if (r < t->radius - edge) return 0.5 / t->radius;
            if (r <= t->radius + edge) return 0.25 / t->radius;
            return 0.0;
        }
        throw InvalidArgument("table kernels have no analytic form");
    }

    void validate() const {
        if (auto g = std::get_if<GaussianKernel>(&family)) {
            if (!(g->sigma > 0.0) || !std::isfinite(g->sigma)) throw InvalidArgument("gaussian sigma must be positive");
        } else if (auto t = std::get_if<TophatKernel>(&family)) {
            if (!(t->radius > 0.0) || !std::isfinite(t->radius)) throw InvalidArgument("tophat radius must be positive");
        } else {
            const auto& m = std::get<TableKernel>(family).values;
            if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument("table kernel must be square");
            if (!m.allFinite()) throw InvalidArgument("table kernel has non-finite entries");
            if (m.minCoeff() < 0.0) throw InvalidArgument("table kernel has negative entries");
            if (m.diagonal().minCoeff() <= 0.0) throw InvalidArgument("table kernel needs a positive diagonal");
        }
    }
};

/// Kernel values k_ij = k(x_i, x_j) at node pairs.
class KernelMatrix {
public:
    KernelMatrix(GridPtr grid, Eigen::MatrixXd entries) : grid_(std::move(grid)), entries_(std::move(entries)) {
        const auto n = static_cast<Eigen::Index>(grid_->size());
        if (entries_.rows() != n || entries_.cols() != n) throw InvalidArgument("kernel matrix size does not match grid");
        if (!entries_.allFinite() || entries_.minCoeff() < 0.0) throw InvalidArgument("kernel entries must be finite and nonnegative");
        if (entries_.diagonal().minCoeff() <= 0.0) throw InvalidArgument("kernel diagonal must be positive");
        symmetric_ = true;
        for (Eigen::Index i = 0; i < n && symmetric_; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                if (entries_(i, j) != entries_(j, i)) {
                    symmetric_ = false;
                    break;
                }
            }
        }
    }

    const GridPtr& grid() const { return grid_; }
    const Eigen::MatrixXd& entries() const { return entries_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
    bool symmetric() const { return symmetric_; }
    std::size_t size() const { return grid_->size(); }

    /// Quadrature of the inflow integral: sum_j k_ij w_j.
    Eigen::VectorXd row_mass() const { return entries_ * grid_->weights(); }
    /// Quadrature of the outflow integral: sum_j k_ji w_j.
    Eigen::VectorXd column_mass() const { return entries_.transpose() * grid_->weights(); }

private:
    GridPtr grid_;
    Eigen::MatrixXd entries_;
    bool symmetric_ = false;
};

using KernelMatrixPtr = std::shared_ptr<const KernelMatrix>;

inline KernelMatrixPtr build_kernel_matrix(const KernelSpec& spec, const GridPtr& grid) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(grid->size());
    Eigen::MatrixXd k(n, n);
    if (auto t = std::get_if<TableKernel>(&spec.family)) {
        if (t->values.rows() != n) throw InvalidArgument("table kernel size does not match grid");
        k = t->values;
    } else {
        const auto& x = grid->nodes();
        // Fill the upper triangle and mirror so the symmetric families are bit-symmetric.
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                const double value = spec.evaluate(x[i], x[j]);
                k(i, j) = value;
                k(j, i) = value;
            }
        }
    }
    return std::make_shared<const KernelMatrix>(grid, std::move(k));
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

enum class DispersalKind { N, D, mixed };

inline std::string_view to_string(DispersalKind kind) {
    switch (kind) {
        case DispersalKind::N: return "N";
        case DispersalKind::D: return "D";
        case DispersalKind::mixed: return "mixed";
    }
    return "?";
}

inline DispersalKind parse_dispersal_kind(std::string_view s) {
    if (s == "N") return DispersalKind::N;
    if (s == "D") return DispersalKind::D;
    if (s == "mixed") return DispersalKind::mixed;
    throw InvalidArgument("unknown dispersal kind '" + std::string(s) + "'");
}

/// Assembled discrete dispersal operator.
///
///   N:      (Ku)_i = d [ sum_j k_ij w_j u_j - a_i u_i ],   a_i = sum_j k_ji w_j
///   D:      same with a_i = 1
///   mixed:  d [ alpha (nonlocal N part) + (1 - alpha) Lap_h u ]
///
/// Lap_h is the 3-point Laplacian closed by mirrored ghost nodes (homogeneous Neumann).
/// The whole operator is stored as one dense matrix.
class DispersalOperator {
public:
    DispersalOperator(DispersalKind kind, double rate, KernelMatrixPtr kernel, double alpha)
        : kind_(kind), rate_(rate), alpha_(alpha), kernel_(std::move(kernel)) {
        if (!kernel_) throw InvalidArgument("operator requires a kernel");
        if (!(rate_ >= 0.0) || !std::isfinite(rate_)) throw InvalidArgument("dispersal rate must be nonnegative");
        if (kind_ != DispersalKind::mixed) alpha_ = 1.0;
        if (!(alpha_ >= 0.0 && alpha_ <= 1.0)) throw InvalidArgument("mixing weight must lie in [0,1]");

        const Grid& grid = *kernel_->grid();
        const auto n = static_cast<Eigen::Index>(grid.size());
        const Eigen::VectorXd& w = grid.weights();

        Eigen::VectorXd a = (kind_ == DispersalKind::D) ? Eigen::VectorXd::Ones(n) : kernel_->column_mass();
        absorption_ = ScalarField(kernel_->grid(), a);

        nonlocal_ = kernel_->entries() * w.asDiagonal();
        nonlocal_.diagonal() -= a;

        matrix_ = (rate_ * alpha_) * nonlocal_;
        if (kind_ == DispersalKind::mixed) {
            const double h2 = grid.spacing() * grid.spacing();
            const double c = rate_ * (1.0 - alpha_) / h2;
            for (Eigen::Index i = 0; i < n; ++i) {
                const Eigen::Index left = (i == 0) ? 1 : i - 1;
                const Eigen::Index right = (i == n - 1) ? n - 2 : i + 1;
                matrix_(i, left) += c;
                matrix_(i, right) += c;
                matrix_(i, i) -= 2.0 * c;
            }
        }
    }

    DispersalKind kind() const { return kind_; }
    double rate() const { return rate_; }
    double alpha() const { return alpha_; }
    /// Weight of the local (Laplacian) part, 1 - alpha.
    double local_weight() const { return 1.0 - alpha_; }
    const KernelMatrix& kernel() const { return *kernel_; }
    const KernelMatrixPtr& kernel_ptr() const { return kernel_; }
    const GridPtr& grid() const { return kernel_->grid(); }
    const Grid& grid_ref() const { return *kernel_->grid(); }
    std::size_t size() const { return kernel_->size(); }
    const ScalarField& absorption() const { return absorption_; }
    const Eigen::MatrixXd& matrix() const { return matrix_; }
    bool symmetric_kernel() const { return kernel_->symmetric(); }

    /// True when the matrix is self-adjoint in the weighted inner product.
    bool weighted_symmetric() const { return kernel_->symmetric(); }

    /// d * alpha * sum_j k_ij w_j: the inflow that enters the (f3) bound.
    Eigen::VectorXd inflow_mass() const { return (rate_ * alpha_) * kernel_->row_mass(); }

    Eigen::VectorXd apply(const Eigen::VectorXd& phi) const {
        if (static_cast<std::size_t>(phi.size()) != size()) throw InvalidArgument("vector length does not match operator");
        return matrix_ * phi;
    }

    ScalarField apply(const ScalarField& phi) const {
        if (!same_grid(phi.grid(), grid())) throw InvalidArgument("field and operator live on different grids");
        return {grid(), matrix_ * phi.values()};
    }

private:
    DispersalKind kind_;
    double rate_;
    double alpha_;
    KernelMatrixPtr kernel_;
    ScalarField absorption_;
    Eigen::MatrixXd nonlocal_;
    Eigen::MatrixXd matrix_;
};

using DispersalOperatorPtr = std::shared_ptr<const DispersalOperator>;

inline DispersalOperatorPtr assemble_operator(DispersalKind kind, double rate, const KernelMatrixPtr& kernel,
                                              const GridPtr& grid, std::optional<double> alpha = std::nullopt) {
    if (!kernel || !same_grid(kernel->grid(), grid)) throw InvalidArgument("kernel was built on a different grid");
    if (kind == DispersalKind::mixed) {
        if (!alpha) throw InvalidArgument("mixed operator requires a mixing weight");
        if (!(*alpha >= 0.0 && *alpha <= 1.0)) throw InvalidArgument("mixing weight must lie in [0,1]");
    }
    return std::make_shared<const DispersalOperator>(kind, rate, kernel, alpha.value_or(1.0));
}

inline ScalarField apply(const DispersalOperator& op, const ScalarField& phi) { return op.apply(phi); }

/// Explicit pairwise evaluation of <phi, K phi>_w:
///   -(d alpha / 2) sum_ij k_ij w_i w_j (phi_i - phi_j)^2
///   - d (1 - alpha) sum_edges (phi_{i+1} - phi_i)^2 / h
///   + d sum_i w_i (colmass_i - a_i) phi_i^2      (nonzero only for kind D)
inline double pairwise_energy(const DispersalOperator& op, const ScalarField& phi) {
    if (!op.symmetric_kernel()) throw InvalidArgument("pairwise energy requires a symmetric kernel");
    if (!same_grid(phi.grid(), op.grid())) throw InvalidArgument("field and operator live on different grids");
    const Grid& grid = op.grid_ref();
    const auto n = static_cast<Eigen::Index>(grid.size());
    const auto& w = grid.weights();
    const auto& k = op.kernel().entries();
    const auto& p = phi.values();

    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(n * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double diff = p[i] - p[j];
            terms.push_back(k(i, j) * w[i] * w[j] * diff * diff);
        }
    }
    double energy = -0.5 * op.rate() * op.alpha() * pairwise_sum(terms);

    if (op.kind() == DispersalKind::mixed) {
        terms.clear();
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            const double diff = p[i + 1] - p[i];
            terms.push_back(diff * diff);
        }
        energy -= op.rate() * op.local_weight() * pairwise_sum(terms) / grid.spacing();
    } else if (op.kind() == DispersalKind::D) {
        const Eigen::VectorXd excess = op.kernel().column_mass() - op.absorption().values();
        const Eigen::VectorXd t = (w.array() * excess.array() * p.array().square()).matrix();
        energy += op.rate() * pairwise_sum(t);
    }
    return energy;
}

/// <phi, K phi>_w computed as integrate(phi * K[phi]). Only sign-definite for symmetric kernels.
inline double quadratic_form(const DispersalOperator& op, const ScalarField& phi) {
    if (!op.symmetric_kernel()) throw InvalidArgument("quadratic form requires a symmetric kernel");
    if (!same_grid(phi.grid(), op.grid())) throw InvalidArgument("field and operator live on different grids");
    const Eigen::VectorXd image = op.apply(phi.values());
    return integrate(op.grid_ref(), phi.values().cwiseProduct(image));
}

}  // namespace ncl

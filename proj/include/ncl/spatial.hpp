#pragma once

#include "ncl/error.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ncl {

/// Pairwise (tree) summation. Error grows like O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> terms) {
    constexpr std::size_t kBlock = 8;
    if (terms.size() <= kBlock) {
        double s = 0.0;
        for (double t : terms) s += t;
        return s;
    }
    const std::size_t half = terms.size() / 2;
    return pairwise_sum(terms.first(half)) + pairwise_sum(terms.subspan(half));
}

inline double pairwise_sum(const Eigen::VectorXd& terms) {
    return pairwise_sum(std::span<const double>(terms.data(), static_cast<std::size_t>(terms.size())));
}

/// Uniform discretization of an interval with composite-trapezoid weights.
///
/// Immutable after construction; share through GridPtr.
class Grid {
public:
    static constexpr std::size_t kMinNodes = 8;

    Grid(double x_lo, double x_hi, std::size_t n) : x_lo_(x_lo), x_hi_(x_hi), n_(n) {
        if (!(std::isfinite(x_lo) && std::isfinite(x_hi)) || !(x_lo < x_hi)) {
            throw InvalidArgument("grid interval must satisfy x_lo < x_hi");
        }
        if (n < kMinNodes) {
            throw InvalidArgument("grid needs at least " + std::to_string(kMinNodes) +
                                  " nodes, got " + std::to_string(n));
        }
        h_ = (x_hi - x_lo) / static_cast<double>(n - 1);
        nodes_.resize(static_cast<Eigen::Index>(n));
        weights_.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            nodes_[k] = (i + 1 == n) ? x_hi : x_lo + h_ * static_cast<double>(i);
            weights_[k] = h_;
        }
        weights_[0] = 0.5 * h_;
        weights_[static_cast<Eigen::Index>(n - 1)] = 0.5 * h_;
    }

    std::size_t size() const { return n_; }
    double x_lo() const { return x_lo_; }
    double x_hi() const { return x_hi_; }
    double length() const { return x_hi_ - x_lo_; }
    double spacing() const { return h_; }
    const Eigen::VectorXd& nodes() const { return nodes_; }
    const Eigen::VectorXd& weights() const { return weights_; }
    double node(std::size_t i) const { return nodes_[static_cast<Eigen::Index>(i)]; }
    double weight(std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.n_ == b.n_ && a.x_lo_ == b.x_lo_ && a.x_hi_ == b.x_hi_;
    }

private:
    double x_lo_;
    double x_hi_;
    std::size_t n_;
    double h_ = 0.0;
    Eigen::VectorXd nodes_;
    Eigen::VectorXd weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline GridPtr make_grid(double x_lo, double x_hi, std::size_t n) {
    return std::make_shared<const Grid>(x_lo, x_hi, n);
}

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
    return a && b && (a == b || *a == *b);
}

enum class FieldTag { rate, density };

/// Real-valued function sampled on the nodes of a Grid.
class ScalarField {
public:
    ScalarField() = default;

    ScalarField(GridPtr grid, Eigen::VectorXd values, FieldTag tag = FieldTag::rate)
        : grid_(std::move(grid)), values_(std::move(values)), tag_(tag) {
        if (!grid_) throw InvalidArgument("field requires a grid");
        if (static_cast<std::size_t>(values_.size()) != grid_->size()) {
            throw InvalidArgument("field length " + std::to_string(values_.size()) +
                                  " does not match grid size " + std::to_string(grid_->size()));
        }
        if (!values_.allFinite()) throw InvalidArgument("field values must be finite");
        if (tag_ == FieldTag::density && values_.minCoeff() < 0.0) {
            throw InvalidArgument("density field has negative entries");
        }
    }

    static ScalarField constant(GridPtr grid, double value, FieldTag tag = FieldTag::rate) {
        const auto n = static_cast<Eigen::Index>(grid->size());
        return {std::move(grid), Eigen::VectorXd::Constant(n, value), tag};
    }

    /// Samples f at every node.
    template <class F>
    static ScalarField sample(GridPtr grid, F&& f, FieldTag tag = FieldTag::rate) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(grid->size()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = f(grid->nodes()[i]);
        return {std::move(grid), std::move(v), tag};
    }

    const GridPtr& grid() const { return grid_; }
    const Eigen::VectorXd& values() const { return values_; }
    FieldTag tag() const { return tag_; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

    double sup_norm() const { return values_.size() ? values_.cwiseAbs().maxCoeff() : 0.0; }
    double min() const { return values_.minCoeff(); }
    double max() const { return values_.maxCoeff(); }
    bool is_constant() const { return values_.size() == 0 || values_.maxCoeff() == values_.minCoeff(); }

private:
    GridPtr grid_;
    Eigen::VectorXd values_;
    FieldTag tag_ = FieldTag::rate;
};

inline void require_same_grid(const ScalarField& a, const ScalarField& b) {
    if (!same_grid(a.grid(), b.grid())) throw InvalidArgument("fields live on different grids");
}

/// Composite-trapezoid quadrature of f over the grid.
inline double integrate(const Grid& grid, const Eigen::VectorXd& f) {
    if (static_cast<std::size_t>(f.size()) != grid.size()) {
        throw InvalidArgument("integrand length does not match grid");
    }
    const Eigen::VectorXd terms = grid.weights().cwiseProduct(f);
    return pairwise_sum(terms);
}

inline double integrate(const ScalarField& f) { return integrate(*f.grid(), f.values()); }

}  // namespace ncl

#pragma once

#include "ncl/dispersal.hpp"
#include "ncl/error.hpp"
#include "ncl/single_species.hpp"
#include "ncl/spatial.hpp"

#include <algorithm>
#include <string>
#include <string_view>

namespace ncl {

/// classic: constant b, c and unit self-regulation.
/// location_dependent: spatial b, c, b1, c2.
/// mixed: location_dependent coefficients with mixed (local + nonlocal) operators.
enum class Variant { classic, location_dependent, mixed };

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::classic: return "classic";
        case Variant::location_dependent: return "location_dependent";
        case Variant::mixed: return "mixed";
    }
    return "?";
}

inline Variant parse_variant(std::string_view s) {
    if (s == "classic") return Variant::classic;
    if (s == "location_dependent") return Variant::location_dependent;
    if (s == "mixed") return Variant::mixed;
    throw InvalidArgument("unknown variant '" + std::string(s) + "'");
}

struct Condition15 {
    bool holds = false;
    /// min(b1) min(c2) - max(b) max(c).
    double margin = 0.0;
};

struct SystemSpec {
    DispersalOperatorPtr op_u;
    DispersalOperatorPtr op_v;
    ScalarField m;
    ScalarField M;
    ScalarField b;
    ScalarField c;
    ScalarField b1;
    ScalarField c2;
    Variant variant = Variant::classic;
};

/// Two-species competition
///   u_t = L_u u + u (m - b1 u - c v)
///   v_t = L_v v + v (M - b u - c2 v)
/// Immutable once assembled.
class CompetitionSystem {
public:
    explicit CompetitionSystem(SystemSpec spec) : s_(std::move(spec)) {
        if (!s_.op_u || !s_.op_v) throw InvalidArgument("system requires both dispersal operators");
        const GridPtr& g = s_.op_u->grid();
        if (!same_grid(g, s_.op_v->grid())) throw InvalidArgument("species operators live on different grids");
        for (const ScalarField* f : {&s_.m, &s_.M, &s_.b, &s_.c, &s_.b1, &s_.c2}) {
            if (!same_grid(g, f->grid())) throw InvalidArgument("coefficient field lives on a different grid");
        }
        if (s_.b.min() < 0.0 || s_.c.min() < 0.0) throw InvalidArgument("competition coefficients must be nonnegative");
        if (!(s_.b1.min() > 0.0) || !(s_.c2.min() > 0.0)) throw InvalidArgument("self-regulation must be positive");

        const bool mixed_ops = s_.op_u->kind() == DispersalKind::mixed || s_.op_v->kind() == DispersalKind::mixed;
        switch (s_.variant) {
            case Variant::classic:
                if (!s_.b.is_constant() || !s_.c.is_constant()) {
                    throw InvalidArgument("classic variant requires constant b and c");
                }
                if (s_.b1.min() != 1.0 || s_.b1.max() != 1.0 || s_.c2.min() != 1.0 || s_.c2.max() != 1.0) {
                    throw InvalidArgument("classic variant requires b1 = c2 = 1");
                }
                if (mixed_ops) throw InvalidArgument("classic variant uses purely nonlocal operators");
                break;
            case Variant::location_dependent:
                if (mixed_ops) throw InvalidArgument("location_dependent variant uses purely nonlocal operators");
                break;
            case Variant::mixed:
                if (s_.op_u->kind() != DispersalKind::mixed || s_.op_v->kind() != DispersalKind::mixed) {
                    throw InvalidArgument("mixed variant requires mixed operators for both species");
                }
                break;
        }
        reaction_u_ = ReactionSpec(s_.m, s_.b1);
        reaction_v_ = ReactionSpec(s_.M, s_.c2);
        c1_u_ = compute_C1(*s_.op_u, reaction_u_);
        c1_v_ = compute_C1(*s_.op_v, reaction_v_);
        reaction_u_.validate(c1_u_);
        reaction_v_.validate(c1_v_);

        condition_.margin = s_.b1.min() * s_.c2.min() - s_.b.max() * s_.c.max();
        condition_.holds = condition_.margin >= 0.0;
        if (s_.variant == Variant::classic) {
            const double bc = s_.b[0] * s_.c[0];
            classifiable_ = bc > 0.0 && bc <= 1.0;
            if (!classifiable_) {
                gate_reason_ = "classic classification requires 0 < bc <= 1 (bc = " + std::to_string(bc) + ")";
            }
        } else {
            classifiable_ = condition_.holds;
            if (!classifiable_) {
                gate_reason_ = "classification requires max(b) max(c) <= min(b1) min(c2) (margin " +
                               std::to_string(condition_.margin) + ")";
            }
        }
    }

    const DispersalOperator& op_u() const { return *s_.op_u; }
    const DispersalOperator& op_v() const { return *s_.op_v; }
    const DispersalOperatorPtr& op_u_ptr() const { return s_.op_u; }
    const DispersalOperatorPtr& op_v_ptr() const { return s_.op_v; }
    const GridPtr& grid() const { return s_.op_u->grid(); }
    const ScalarField& m() const { return s_.m; }
    const ScalarField& M() const { return s_.M; }
    const ScalarField& b() const { return s_.b; }
    const ScalarField& c() const { return s_.c; }
    const ScalarField& b1() const { return s_.b1; }
    const ScalarField& c2() const { return s_.c2; }
    Variant variant() const { return s_.variant; }
    const SystemSpec& spec() const { return s_; }

    const ReactionSpec& reaction_u() const { return reaction_u_; }
    const ReactionSpec& reaction_v() const { return reaction_v_; }
    double c1_u() const { return c1_u_; }
    double c1_v() const { return c1_v_; }

    const Condition15& condition_1_5() const { return condition_; }
    /// Whether the classification theorems apply. Dynamics run either way.
    bool classifiable() const { return classifiable_; }
    const std::string& gate_reason() const { return gate_reason_; }

    /// Mixing weights, 1 for purely nonlocal operators.
    double alpha() const { return s_.op_u->alpha(); }
    double beta() const { return s_.op_v->alpha(); }

private:
    SystemSpec s_;
    ReactionSpec reaction_u_;
    ReactionSpec reaction_v_;
    double c1_u_ = 0.0;
    double c1_v_ = 0.0;
    Condition15 condition_;
    bool classifiable_ = false;
    std::string gate_reason_;
};

using CompetitionSystemPtr = std::shared_ptr<const CompetitionSystem>;

inline CompetitionSystemPtr assemble_system(SystemSpec spec) {
    return std::make_shared<const CompetitionSystem>(std::move(spec));
}

/// max(b) max(c) <= min(b1) min(c2), with the margin.
inline Condition15 check_condition_1_5(const CompetitionSystem& system) {
    if (system.variant() == Variant::classic) {
        throw InvalidArgument("the self-regulation condition applies to the location_dependent and mixed variants");
    }
    return system.condition_1_5();
}

/// Classic system with constant b, c.
inline SystemSpec classic_spec(DispersalOperatorPtr op_u, DispersalOperatorPtr op_v, ScalarField m, ScalarField M,
                               double b, double c) {
    const GridPtr g = op_u->grid();
    return {std::move(op_u),         std::move(op_v),         std::move(m),
            std::move(M),            ScalarField::constant(g, b), ScalarField::constant(g, c),
            ScalarField::constant(g, 1.0), ScalarField::constant(g, 1.0), Variant::classic};
}

struct SystemState {
    ScalarField u;
    ScalarField v;
    double t = 0.0;
};

}  // namespace ncl

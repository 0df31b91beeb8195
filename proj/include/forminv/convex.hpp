#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "forminv/errors.hpp"
#include "forminv/mesh_space.hpp"

namespace forminv {

enum class ConvexFlavor { positive_cone, cap, order_interval, domination, custom };

inline std::string_view to_string(ConvexFlavor flavor) {
    switch (flavor) {
        case ConvexFlavor::positive_cone: return "positive_cone";
        case ConvexFlavor::cap: return "cap";
        case ConvexFlavor::order_interval: return "order_interval";
        case ConvexFlavor::domination: return "domination";
        case ConvexFlavor::custom: return "custom";
    }
    return "unknown";
}

/// Closed convex subset of the discrete H (or of H x H) with its orthogonal
/// projection.
///
/// Elements are all-node vectors, concatenated block by block for product
/// sets. The inner product is the lumped-mass one, for which every nodal
/// lattice operation below is the exact orthogonal projection.
///
/// The domination flavor is the set {(u,v) : u <= v} with
///   P(u,v) = (u - (u-v)^+/2, v + (u-v)^+/2).
/// Intersected with the positive quadrant it gives {0 <= u <= v}.
class ConvexSet {
public:
    using ProjectionMap = std::function<NodalVector(const NodalVector&)>;
    using MembershipPredicate = std::function<bool(const NodalVector&)>;

    static ConvexSet positive_cone(const Mesh& mesh, std::size_t blocks = 1) {
        return order_interval_impl(ConvexFlavor::positive_cone, mesh, blocks, 0.0,
                                   std::numeric_limits<double>::infinity());
    }

    static ConvexSet cap(const Mesh& mesh, double level, std::size_t blocks = 1) {
        return order_interval_impl(ConvexFlavor::cap, mesh, blocks, -std::numeric_limits<double>::infinity(),
                                   level);
    }

    static ConvexSet order_interval(const Mesh& mesh, double lo, double hi, std::size_t blocks = 1) {
        if (!(lo <= hi)) throw std::invalid_argument("order_interval: need lo <= hi");
        return order_interval_impl(ConvexFlavor::order_interval, mesh, blocks, lo, hi);
    }

    static ConvexSet domination(const Mesh& mesh) {
        ConvexSet c(ConvexFlavor::domination, mesh, 2);
        return c;
    }

    static ConvexSet custom(const Mesh& mesh, std::size_t blocks, ProjectionMap projection,
                            MembershipPredicate membership) {
        if (!projection || !membership)
            throw std::invalid_argument("custom convex set needs both a projection and a membership predicate");
        ConvexSet c(ConvexFlavor::custom, mesh, blocks);
        c.projection_ = std::move(projection);
        c.membership_ = std::move(membership);
        return c;
    }

    /// C = H (P = identity).
    static ConvexSet whole_space(const Mesh& mesh, std::size_t blocks = 1) {
        return custom(
            mesh, blocks, [](const NodalVector& x) { return x; }, [](const NodalVector&) { return true; });
    }

    ConvexFlavor flavor() const noexcept { return flavor_; }
    const Mesh& mesh() const noexcept { return mesh_; }
    std::size_t blocks() const noexcept { return blocks_; }
    std::size_t dimension() const noexcept { return blocks_ * mesh_.n_nodes(); }
    double lower() const noexcept { return lo_; }
    double upper() const noexcept { return hi_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }

    double inner(const NodalVector& x, const NodalVector& y) const {
        check(x, "inner");
        check(y, "inner");
        return (weights_.array() * x.array() * y.array()).sum();
    }
    double norm(const NodalVector& x) const { return std::sqrt(inner(x, x)); }

    NodalVector project(const NodalVector& x) const {
        check(x, "project");
        switch (flavor_) {
            case ConvexFlavor::positive_cone:
            case ConvexFlavor::cap:
            case ConvexFlavor::order_interval: return x.cwiseMax(lo_).cwiseMin(hi_);
            case ConvexFlavor::domination: {
                const Eigen::Index n = static_cast<Eigen::Index>(mesh_.n_nodes());
                NodalVector p = x;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double u = x(i);
                    const double v = x(n + i);
                    if (u > v) {
                        // u - (u-v)/2 and v + (u-v)/2 coincide; store one value so u <= v is exact.
                        const double mid = u - 0.5 * (u - v);
                        p(i) = mid;
                        p(n + i) = mid;
                    }
                }
                return p;
            }
            case ConvexFlavor::custom: {
                NodalVector p = projection_(x);
                check(p, "custom projection result");
                if (!membership_(p))
                    throw ContractViolation("custom projection returned a point outside its own set");
                const NodalVector pp = projection_(p);
                if (norm(pp - p) > 1e-12 * (1.0 + norm(p)))
                    throw ContractViolation("custom projection failed the idempotency audit");
                return p;
            }
        }
        return x;
    }

    bool contains(const NodalVector& x, double tol = 0.0) const {
        check(x, "contains");
        switch (flavor_) {
            case ConvexFlavor::positive_cone:
            case ConvexFlavor::cap:
            case ConvexFlavor::order_interval:
                return (x.array() >= lo_ - tol).all() && (x.array() <= hi_ + tol).all();
            case ConvexFlavor::domination: {
                const Eigen::Index n = static_cast<Eigen::Index>(mesh_.n_nodes());
                return (x.head(n).array() <= x.tail(n).array() + tol).all();
            }
            case ConvexFlavor::custom: return membership_(x);
        }
        return false;
    }

    /// Mass-weighted distance ||x - Px||.
    double distance(const NodalVector& x) const { return norm(x - project(x)); }

private:
    ConvexSet(ConvexFlavor flavor, const Mesh& mesh, std::size_t blocks)
        : flavor_(flavor), mesh_(mesh), blocks_(blocks) {
        if (blocks == 0) throw std::invalid_argument("convex set needs at least one block");
        const Eigen::VectorXd w = mesh.lumped_weights();
        weights_.resize(static_cast<Eigen::Index>(dimension()));
        for (std::size_t b = 0; b < blocks; ++b)
            weights_.segment(static_cast<Eigen::Index>(b * mesh.n_nodes()), w.size()) = w;
    }

    static ConvexSet order_interval_impl(ConvexFlavor flavor, const Mesh& mesh, std::size_t blocks, double lo,
                                         double hi) {
        ConvexSet c(flavor, mesh, blocks);
        c.lo_ = lo;
        c.hi_ = hi;
        return c;
    }

    void check(const NodalVector& x, const char* who) const {
        if (static_cast<std::size_t>(x.size()) != dimension())
            throw std::invalid_argument(std::string(who) + ": vector length " + std::to_string(x.size()) +
                                        " does not match convex set dimension " + std::to_string(dimension()));
    }

    ConvexFlavor flavor_;
    Mesh mesh_;
    std::size_t blocks_;
    double lo_ = -std::numeric_limits<double>::infinity();
    double hi_ = std::numeric_limits<double>::infinity();
    Eigen::VectorXd weights_;
    ProjectionMap projection_;
    MembershipPredicate membership_;
};

/// Worst sampled values of the three projection axioms.
struct ProjectionAudit {
    double max_variational = -std::numeric_limits<double>::infinity();  // max (x-Px | y-Px)
    double max_idempotency_defect = 0.0;                                  // max ||P(Px)-Px||
    double max_nonexpansive_excess = -std::numeric_limits<double>::infinity();  // max ||Px-Py||-||x-y||
    std::size_t samples = 0;

    bool pass(double tol = 1e-10) const {
        return max_variational <= tol && max_idempotency_defect <= tol && max_nonexpansive_excess <= tol;
    }
};

inline ProjectionAudit check_projection_axioms(const ConvexSet& c, std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw std::invalid_argument("check_projection_axioms: samples must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 2.0);
    const Eigen::Index n = static_cast<Eigen::Index>(c.dimension());
    auto draw = [&] {
        NodalVector x(n);
        for (Eigen::Index i = 0; i < n; ++i) x(i) = normal(rng);
        return x;
    };
    ProjectionAudit audit;
    audit.samples = samples;
    for (std::size_t s = 0; s < samples; ++s) {
        const NodalVector x = draw();
        const NodalVector y = c.project(draw());
        const NodalVector px = c.project(x);
        audit.max_variational = std::max(audit.max_variational, c.inner(x - px, y - px));
        audit.max_idempotency_defect = std::max(audit.max_idempotency_defect, c.norm(c.project(px) - px));
        // y is a member, so ||Px - Py|| = ||Px - y||; use a fresh z to test non-members as well.
        const NodalVector z = draw();
        audit.max_nonexpansive_excess =
            std::max(audit.max_nonexpansive_excess, c.norm(px - c.project(z)) - c.norm(x - z));
    }
    return audit;
}

/// x = (x ^ level) + (x - level)^+.
inline std::pair<NodalVector, NodalVector> sublattice_decomposition(const NodalVector& x, double level) {
    NodalVector low = x.cwiseMin(level);
    NodalVector high = (x.array() - level).cwiseMax(0.0).matrix();
    return {std::move(low), std::move(high)};
}

}  // namespace forminv

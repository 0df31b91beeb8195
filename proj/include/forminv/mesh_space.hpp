#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "forminv/errors.hpp"

namespace forminv {

/// Galerkin coefficient vector. Its length is the dof count of the space it
/// lives in, or the node count when it represents an element of H.
using NodalVector = Eigen::VectorXd;

enum class BoundaryKind { dirichlet, neumann, robin };

inline std::string_view to_string(BoundaryKind kind) {
    switch (kind) {
        case BoundaryKind::dirichlet: return "dirichlet";
        case BoundaryKind::neumann: return "neumann";
        case BoundaryKind::robin: return "robin";
    }
    return "unknown";
}

inline BoundaryKind parse_boundary_kind(std::string_view name) {
    if (name == "dirichlet") return BoundaryKind::dirichlet;
    if (name == "neumann") return BoundaryKind::neumann;
    if (name == "robin") return BoundaryKind::robin;
    throw std::invalid_argument("unknown boundary kind '" + std::string(name) +
                                "' (expected dirichlet, neumann or robin)");
}

/// Uniform mesh of the interval [0, length].
class Mesh {
public:
    Mesh(std::size_t n_cells, double length) : n_cells_(n_cells), length_(length) {
        if (n_cells == 0) throw std::invalid_argument("mesh needs at least one cell");
        if (!(length > 0.0) || !std::isfinite(length))
            throw std::invalid_argument("mesh length must be positive and finite");
        h_ = length / static_cast<double>(n_cells);
        nodes_.resize(n_cells + 1);
        for (std::size_t i = 0; i <= n_cells; ++i)
            nodes_[i] = static_cast<double>(i) * h_;
        nodes_.back() = length;
    }

    std::size_t n_cells() const noexcept { return n_cells_; }
    std::size_t n_nodes() const noexcept { return n_cells_ + 1; }
    double length() const noexcept { return length_; }
    double h() const noexcept { return h_; }
    std::span<const double> nodes() const noexcept { return nodes_; }
    double node(std::size_t i) const { return nodes_.at(i); }
    double midpoint(std::size_t cell) const { return 0.5 * (nodes_.at(cell) + nodes_.at(cell + 1)); }

    /// Diagonal of the row-sum lumped mass matrix over all nodes.
    Eigen::VectorXd lumped_weights() const {
        Eigen::VectorXd w = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n_nodes()), h_);
        w(0) = 0.5 * h_;
        w(static_cast<Eigen::Index>(n_cells_)) = 0.5 * h_;
        return w;
    }

    bool operator==(const Mesh& other) const {
        return n_cells_ == other.n_cells_ && length_ == other.length_;
    }

private:
    std::size_t n_cells_;
    double length_;
    double h_;
    std::vector<double> nodes_;
};

/// P1 finite-element space over a Mesh. Dirichlet constraints are handled by
/// eliminating the two boundary nodes from the dof set.
class FemSpace {
public:
    FemSpace(Mesh mesh, BoundaryKind bc) : mesh_(std::move(mesh)), bc_(bc) {
        const std::size_t n = mesh_.n_nodes();
        dof_of_node_.assign(n, npos);
        const std::size_t first = bc_ == BoundaryKind::dirichlet ? 1 : 0;
        const std::size_t last = bc_ == BoundaryKind::dirichlet ? n - 1 : n;
        for (std::size_t i = first; i < last; ++i) {
            dof_of_node_[i] = free_dofs_.size();
            free_dofs_.push_back(i);
        }
        if (free_dofs_.empty())
            throw std::invalid_argument("finite-element space has no free dofs");
    }

    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    const Mesh& mesh() const noexcept { return mesh_; }
    BoundaryKind bc() const noexcept { return bc_; }
    std::size_t n_dofs() const noexcept { return free_dofs_.size(); }
    std::size_t n_nodes() const noexcept { return mesh_.n_nodes(); }
    std::span<const std::size_t> free_dofs() const noexcept { return free_dofs_; }

    /// Dof index of a node, or npos for a constrained node.
    std::size_t dof_of_node(std::size_t node) const { return dof_of_node_.at(node); }

    /// Coordinate of dof i.
    double dof_coordinate(std::size_t dof) const { return mesh_.node(free_dofs_.at(dof)); }

    /// Dof vector -> all-node vector (constrained nodes are zero).
    NodalVector extend(const NodalVector& u) const {
        check_dofs(u, "extend");
        NodalVector full = NodalVector::Zero(static_cast<Eigen::Index>(n_nodes()));
        for (std::size_t d = 0; d < free_dofs_.size(); ++d)
            full(static_cast<Eigen::Index>(free_dofs_[d])) = u(static_cast<Eigen::Index>(d));
        return full;
    }

    /// All-node vector -> dof vector (constrained entries are dropped).
    NodalVector restrict_to_dofs(const NodalVector& full) const {
        if (static_cast<std::size_t>(full.size()) != n_nodes())
            throw std::invalid_argument("restrict_to_dofs: expected a vector over all nodes");
        NodalVector u(static_cast<Eigen::Index>(n_dofs()));
        for (std::size_t d = 0; d < free_dofs_.size(); ++d)
            u(static_cast<Eigen::Index>(d)) = full(static_cast<Eigen::Index>(free_dofs_[d]));
        return u;
    }

    /// Largest |value| a node vector carries on constrained nodes.
    double constrained_magnitude(const NodalVector& full) const {
        double worst = 0.0;
        for (std::size_t i = 0; i < n_nodes(); ++i)
            if (dof_of_node_[i] == npos) worst = std::max(worst, std::abs(full(static_cast<Eigen::Index>(i))));
        return worst;
    }

    void check_dofs(const NodalVector& u, std::string_view who) const {
        if (static_cast<std::size_t>(u.size()) != n_dofs())
            throw std::invalid_argument(std::string(who) + ": vector length " + std::to_string(u.size()) +
                                        " does not match space dimension " + std::to_string(n_dofs()));
    }

private:
    Mesh mesh_;
    BoundaryKind bc_;
    std::vector<std::size_t> free_dofs_;
    std::vector<std::size_t> dof_of_node_;
};

inline FemSpace build_space(long long n_cells, double length, BoundaryKind bc) {
    if (n_cells < 1) throw std::invalid_argument("n_cells must be >= 1");
    if (!(length > 0.0)) throw std::invalid_argument("length must be > 0");
    if (bc == BoundaryKind::dirichlet && n_cells < 2)
        throw std::invalid_argument("a dirichlet space needs n_cells >= 2");
    return FemSpace(Mesh(static_cast<std::size_t>(n_cells), length), bc);
}

/// Nodal interpolation at the free nodes.
template <class Field>
NodalVector interpolate(const FemSpace& space, Field&& field) {
    NodalVector u(static_cast<Eigen::Index>(space.n_dofs()));
    for (std::size_t d = 0; d < space.n_dofs(); ++d) {
        const double x = space.dof_coordinate(d);
        const double value = field(x);
        if (!std::isfinite(value))
            throw NumericDomainError("interpolate: field is not finite at x = " + std::to_string(x));
        u(static_cast<Eigen::Index>(d)) = value;
    }
    return u;
}

}  // namespace forminv

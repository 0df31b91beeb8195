#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "forminv/errors.hpp"
#include "forminv/mesh_space.hpp"

namespace forminv {

using SparseMatrix = Eigen::SparseMatrix<double>;
using TimeFunction = std::function<double(double)>;
using SpaceTimeFunction = std::function<double(double, double)>;

/// Nonlocal term w(t) (u|phi)_H (psi|v)_H. Profiles are dof vectors.
struct RankOneTerm {
    NodalVector phi;
    NodalVector psi;
    TimeFunction weight;
};

/// Coefficient bundle of the time-dependent form
///   a(t,u,v) = int a(t,x) u' v' dx + beta_l(t) u(0) v(0) + beta_r(t) u(L) v(L)
///              + w(t) (u|phi)_H (psi|v)_H.
/// Boundary terms only act on boundary nodes that are dofs.
struct FormSpec {
    SpaceTimeFunction diffusion = [](double, double) { return 1.0; };
    /// Declared lower bound eta > 0 of the diffusion; empty for unsigned forms.
    std::optional<double> ellipticity = 1.0;
    TimeFunction beta_left = [](double) { return 0.0; };
    TimeFunction beta_right = [](double) { return 0.0; };
    std::optional<RankOneTerm> rank_one;

    static FormSpec laplacian(double scale = 1.0) {
        FormSpec spec;
        spec.diffusion = [scale](double, double) { return scale; };
        spec.ellipticity = scale > 0.0 ? std::optional<double>(scale) : std::nullopt;
        return spec;
    }

    static FormSpec robin(double scale, double beta_l, double beta_r) {
        FormSpec spec = laplacian(scale);
        spec.beta_left = [beta_l](double) { return beta_l; };
        spec.beta_right = [beta_r](double) { return beta_r; };
        return spec;
    }

    bool has_rank_one() const { return rank_one.has_value(); }
};

namespace detail {

inline double checked(double value, const char* what, double t, double x) {
    if (!std::isfinite(value)) {
        std::ostringstream os;
        os << what << " is not finite at t = " << t << ", x = " << x;
        throw NumericDomainError(os.str());
    }
    return value;
}

/// Scatter a dense all-node matrix into the dof-indexed sparse matrix.
inline SparseMatrix reduce(const FemSpace& space, const std::vector<Eigen::Triplet<double>>& node_triplets) {
    std::vector<Eigen::Triplet<double>> dof_triplets;
    dof_triplets.reserve(node_triplets.size());
    for (const auto& tr : node_triplets) {
        const std::size_t i = space.dof_of_node(static_cast<std::size_t>(tr.row()));
        const std::size_t j = space.dof_of_node(static_cast<std::size_t>(tr.col()));
        if (i == FemSpace::npos || j == FemSpace::npos) continue;
        dof_triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), tr.value());
    }
    const auto n = static_cast<Eigen::Index>(space.n_dofs());
    SparseMatrix out(n, n);
    out.setFromTriplets(dof_triplets.begin(), dof_triplets.end());
    return out;
}

}  // namespace detail

/// P1 mass matrix on the dofs; the lumped variant is the row-sum diagonal.
inline SparseMatrix assemble_mass(const FemSpace& space, bool lumped) {
    const Mesh& mesh = space.mesh();
    const double h = mesh.h();
    std::vector<Eigen::Triplet<double>> tr;
    tr.reserve(4 * mesh.n_cells());
    for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
        const int i = static_cast<int>(c);
        const int j = i + 1;
        if (lumped) {
            tr.emplace_back(i, i, 0.5 * h);
            tr.emplace_back(j, j, 0.5 * h);
        } else {
            tr.emplace_back(i, i, h / 3.0);
            tr.emplace_back(j, j, h / 3.0);
            tr.emplace_back(i, j, h / 6.0);
            tr.emplace_back(j, i, h / 6.0);
        }
    }
    return detail::reduce(space, tr);
}

/// Unit-coefficient stiffness: the gradient part of the H1 inner product.
inline SparseMatrix assemble_unit_stiffness(const FemSpace& space) {
    const Mesh& mesh = space.mesh();
    const double k = 1.0 / mesh.h();
    std::vector<Eigen::Triplet<double>> tr;
    for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
        const int i = static_cast<int>(c);
        const int j = i + 1;
        tr.emplace_back(i, i, k);
        tr.emplace_back(j, j, k);
        tr.emplace_back(i, j, -k);
        tr.emplace_back(j, i, -k);
    }
    return detail::reduce(space, tr);
}

/// Gram matrix of the discrete V inner product: unit stiffness + mass.
inline SparseMatrix v_gram(const FemSpace& space, bool lumped) {
    SparseMatrix g = assemble_unit_stiffness(space) + assemble_mass(space, lumped);
    g.makeCompressed();
    return g;
}

/// A(t) and the mass matrix it was paired with. Entry A(i,j) = a(t, phi_j, phi_i).
struct AssembledOperator {
    double t = 0.0;
    SparseMatrix matrix;
    SparseMatrix mass;
    bool lumped = true;

    std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
};

inline AssembledOperator assemble_operator(const FemSpace& space, const FormSpec& spec, double t,
                                           bool lumped = true) {
    const Mesh& mesh = space.mesh();
    const double h = mesh.h();
    std::vector<Eigen::Triplet<double>> tr;
    tr.reserve(4 * mesh.n_cells() + 2);
    for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
        const double xm = mesh.midpoint(c);
        const double a = detail::checked(spec.diffusion(t, xm), "diffusion coefficient", t, xm);
        if (spec.ellipticity && a < *spec.ellipticity) {
            std::ostringstream os;
            os << "diffusion coefficient " << a << " below declared ellipticity bound " << *spec.ellipticity
               << " at t = " << t << ", x = " << xm;
            throw ContractViolation(os.str());
        }
        const double k = a / h;
        const int i = static_cast<int>(c);
        const int j = i + 1;
        tr.emplace_back(i, i, k);
        tr.emplace_back(j, j, k);
        tr.emplace_back(i, j, -k);
        tr.emplace_back(j, i, -k);
    }
    const int last = static_cast<int>(mesh.n_cells());
    tr.emplace_back(0, 0, detail::checked(spec.beta_left(t), "beta_left", t, 0.0));
    tr.emplace_back(last, last, detail::checked(spec.beta_right(t), "beta_right", t, mesh.length()));

    AssembledOperator op;
    op.t = t;
    op.lumped = lumped;
    op.mass = assemble_mass(space, lumped);
    op.matrix = detail::reduce(space, tr);

    if (spec.rank_one) {
        const RankOneTerm& r = *spec.rank_one;
        space.check_dofs(r.phi, "rank-one phi");
        space.check_dofs(r.psi, "rank-one psi");
        const double w = detail::checked(r.weight(t), "rank-one weight", t, 0.0);
        const NodalVector mphi = op.mass * r.phi;
        const NodalVector mpsi = op.mass * r.psi;
        std::vector<Eigen::Triplet<double>> extra;
        for (Eigen::Index i = 0; i < mpsi.size(); ++i) {
            if (mpsi(i) == 0.0) continue;
            for (Eigen::Index j = 0; j < mphi.size(); ++j)
                if (mphi(j) != 0.0) extra.emplace_back(static_cast<int>(i), static_cast<int>(j), w * mpsi(i) * mphi(j));
        }
        SparseMatrix rank(op.matrix.rows(), op.matrix.cols());
        rank.setFromTriplets(extra.begin(), extra.end());
        op.matrix += rank;
    }
    op.matrix.makeCompressed();
    return op;
}

/// a(t,u,v) = v^T A(t) u.
inline double apply_form(const AssembledOperator& op, const NodalVector& u, const NodalVector& v) {
    if (static_cast<std::size_t>(u.size()) != op.size() || static_cast<std::size_t>(v.size()) != op.size())
        throw std::invalid_argument("apply_form: vector length does not match operator size");
    return v.dot(op.matrix * u);
}

/// Boundedness and quasi-coercivity constants (M, alpha, omega):
///   |a(t,u,v)| <= M |u|_V |v|_V,   a(t,u,u) + omega |u|_H^2 >= alpha |u|_V^2.
struct FormConstants {
    double M_est = 0.0;
    double alpha_est = 0.0;
    double omega_est = 0.0;
};

namespace detail {

struct ConstantsPencil {
    Eigen::LLT<Eigen::MatrixXd> gram;
    Eigen::MatrixXd mass;
    std::vector<Eigen::MatrixXd> forms;

    /// G^{-1/2} X G^{-T/2}
    Eigen::MatrixXd whiten(const Eigen::MatrixXd& x) const {
        const auto L = gram.matrixL();
        Eigen::MatrixXd y = L.solve(x);
        return L.solve(y.transpose()).transpose();
    }

    double alpha_for(double omega) const {
        double alpha = std::numeric_limits<double>::infinity();
        for (const auto& a : forms) {
            const Eigen::MatrixXd sym = 0.5 * (a + a.transpose()) + omega * mass;
            Eigen::MatrixXd w = whiten(sym);
            w = 0.5 * (w + w.transpose());
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w, Eigen::EigenvaluesOnly);
            alpha = std::min(alpha, eig.eigenvalues().minCoeff());
        }
        return alpha;
    }
};

}  // namespace detail

inline FormConstants estimate_constants(const FemSpace& space, const FormSpec& spec,
                                        std::span<const double> t_samples, bool lumped = true) {
    if (t_samples.empty()) throw std::invalid_argument("estimate_constants: empty t_samples");
    detail::ConstantsPencil pencil;
    const Eigen::MatrixXd gram = Eigen::MatrixXd(v_gram(space, lumped));
    pencil.gram.compute(gram);
    pencil.mass = Eigen::MatrixXd(assemble_mass(space, lumped));

    FormConstants out;
    for (double t : t_samples) {
        const Eigen::MatrixXd a = Eigen::MatrixXd(assemble_operator(space, spec, t, lumped).matrix);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(pencil.whiten(a));
        out.M_est = std::max(out.M_est, svd.singularValues()(0));
        pencil.forms.push_back(a);
    }

    const double scale = std::max(out.M_est, 1.0);
    const double coercive = pencil.alpha_for(0.0);
    if (coercive > 1e-12 * scale) {
        out.alpha_est = coercive;
        out.omega_est = 0.0;
    } else {
        // alpha(omega) is concave and nondecreasing; take the first rung of a
        // geometric ladder that recovers half of the saturated value.
        const double saturated = pencil.alpha_for(1e4 * scale);
        if (!(saturated > 0.0))
            throw NumericDomainError("estimate_constants: form is not quasi-coercive on the sampled times");
        double omega = scale * std::ldexp(1.0, -20);
        double alpha = pencil.alpha_for(omega);
        while (alpha < 0.5 * saturated && omega < 1e4 * scale) {
            omega *= 2.0;
            alpha = pencil.alpha_for(omega);
        }
        out.alpha_est = alpha;
        out.omega_est = omega;
    }
    // Outward rounding so the reported triple is a valid bound, not an equality.
    out.M_est *= 1.0 + 1e-9;
    out.alpha_est *= 1.0 - 1e-9;

    // Audit on random vectors.
    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> normal;
    const Eigen::Index n = static_cast<Eigen::Index>(space.n_dofs());
    for (int k = 0; k < 100; ++k) {
        NodalVector u(n), v(n);
        for (Eigen::Index i = 0; i < n; ++i) u(i) = normal(rng);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
        const double nu = std::sqrt(u.dot(gram * u));
        const double nv = std::sqrt(v.dot(gram * v));
        const double hu = u.dot(pencil.mass * u);
        for (const auto& a : pencil.forms) {
            const double bound = std::abs(v.dot(a * u)) - out.M_est * nu * nv;
            const double coerc = u.dot(a * u) + out.omega_est * hu - out.alpha_est * nu * nu;
            const double slack = 1e-12 * (1.0 + out.M_est) * nu * (nu + nv);
            if (bound > slack || coerc < -slack)
                throw NumericDomainError("estimate_constants: random audit rejected the estimated constants");
        }
    }
    return out;
}

}  // namespace forminv

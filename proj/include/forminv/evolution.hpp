#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "forminv/convex.hpp"
#include "forminv/errors.hpp"
#include "forminv/forms.hpp"
#include "forminv/mesh_space.hpp"

namespace forminv {

/// 0 = t_0 < t_1 < ... < t_N = T.
class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
        if (times_.size() < 2) throw std::invalid_argument("time grid needs at least one step");
        if (times_.front() != 0.0) throw std::invalid_argument("time grid must start at 0");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1])) throw std::invalid_argument("time grid must be strictly increasing");
    }

    static TimeGrid uniform(double T, std::size_t n_steps) {
        if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("final time T must be positive");
        if (n_steps == 0) throw std::invalid_argument("time grid needs at least one step");
        std::vector<double> t(n_steps + 1);
        for (std::size_t k = 0; k <= n_steps; ++k) t[k] = T * static_cast<double>(k) / static_cast<double>(n_steps);
        t.back() = T;
        return TimeGrid(std::move(t));
    }

    /// Uniform grid with step tau; T/tau must be an integer up to rounding.
    static TimeGrid with_step(double T, double tau) {
        if (!(T > 0.0)) throw std::invalid_argument("final time T must be positive");
        if (!(tau > 0.0) || tau < 1e-14 * T) throw std::invalid_argument("time step too small relative to T");
        const double ratio = T / tau;
        const double n = std::round(ratio);
        if (n < 1.0 || std::abs(ratio - n) > 1e-8 * std::max(1.0, ratio))
            throw std::invalid_argument("T must be an integer multiple of tau");
        return uniform(T, static_cast<std::size_t>(n));
    }

    double T() const noexcept { return times_.back(); }
    std::size_t n_steps() const noexcept { return times_.size() - 1; }
    double time(std::size_t k) const { return times_.at(k); }
    /// Length of step k -> k+1.
    double tau(std::size_t k) const { return times_.at(k + 1) - times_.at(k); }
    std::span<const double> times() const noexcept { return times_; }

    /// Index of the grid point nearest to t.
    std::size_t nearest(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t);
        if (it == times_.end()) return times_.size() - 1;
        std::size_t k = static_cast<std::size_t>(it - times_.begin());
        if (k > 0 && (t - times_[k - 1]) < (times_[k] - t)) --k;
        return k;
    }

private:
    std::vector<double> times_;
};

enum class SourceSign { none, nonneg, nonpos };

/// Right-hand side f(t,x), paired with test functions through load vectors
/// F(t)_i = int f(t,x) phi_i dx (midpoint rule per cell).
struct SourceSpec {
    SpaceTimeFunction f;  // empty means f == 0
    SourceSign sign = SourceSign::none;

    static SourceSpec zero() { return {}; }
    static SourceSpec constant(double c) {
        SourceSpec s;
        s.f = [c](double, double) { return c; };
        s.sign = c >= 0.0 ? SourceSign::nonneg : SourceSign::nonpos;
        return s;
    }
    bool is_zero() const { return !f; }
};

inline NodalVector load_vector(const FemSpace& space, const SourceSpec& source, double t) {
    const Mesh& mesh = space.mesh();
    NodalVector full = NodalVector::Zero(static_cast<Eigen::Index>(mesh.n_nodes()));
    if (!source.is_zero()) {
        const double half = 0.5 * mesh.h();
        for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
            const double xm = mesh.midpoint(c);
            const double value = detail::checked(source.f(t, xm), "source", t, xm);
            if (source.sign == SourceSign::nonneg && value < 0.0)
                throw ContractViolation("source declared nonnegative takes a negative value");
            if (source.sign == SourceSign::nonpos && value > 0.0)
                throw ContractViolation("source declared nonpositive takes a positive value");
            full(static_cast<Eigen::Index>(c)) += half * value;
            full(static_cast<Eigen::Index>(c + 1)) += half * value;
        }
    }
    return space.restrict_to_dofs(full);
}

struct StepOptions {
    double theta = 1.0;
    bool lumped = true;
};

namespace detail {

inline NodalVector solve_checked(const SparseMatrix& system, const NodalVector& rhs) {
    constexpr double rel_tol = 1e-12;
    const double rhs_norm = rhs.norm();
    if (rhs_norm == 0.0) return NodalVector::Zero(rhs.size());

    const SparseMatrix transpose = system.transpose();
    const bool symmetric = (system - transpose).norm() <= 1e-14 * system.norm();
    NodalVector x;
    if (symmetric) {
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(system);
        if (ldlt.info() != Eigen::Success)
            throw SolverFailure("step: LDLT factorization failed (singular system)",
                                std::numeric_limits<double>::infinity());
        if ((ldlt.vectorD().array() <= 0.0).any())
            throw SolverFailure("step: system matrix is not positive definite", std::numeric_limits<double>::infinity());
        x = ldlt.solve(rhs);
        for (int refine = 0; refine < 2 && (system * x - rhs).norm() > rel_tol * rhs_norm; ++refine)
            x += ldlt.solve(rhs - system * x);
    } else {
        Eigen::SparseLU<SparseMatrix> lu;
        lu.analyzePattern(system);
        lu.factorize(system);
        if (lu.info() != Eigen::Success)
            throw SolverFailure("step: LU factorization failed (singular system)", std::numeric_limits<double>::infinity());
        x = lu.solve(rhs);
        for (int refine = 0; refine < 2 && (system * x - rhs).norm() > rel_tol * rhs_norm; ++refine)
            x += lu.solve(rhs - system * x);
    }
    const double residual = (system * x - rhs).norm() / rhs_norm;
    if (!(residual <= rel_tol)) {
        std::ostringstream os;
        os << "step: relative residual " << residual << " above " << rel_tol;
        throw SolverFailure(os.str(), residual);
    }
    return x;
}

}  // namespace detail

/// One theta-scheme step:
///   (M + tau theta A(t+tau)) u' = (M - tau (1-theta) A(t)) u + tau [theta F(t+tau) + (1-theta) F(t)].
inline NodalVector step(const FemSpace& space, const FormSpec& spec, const SourceSpec& f, const NodalVector& u_n,
                        double t_n, double tau, const StepOptions& opts = {}) {
    space.check_dofs(u_n, "step");
    if (!(tau > 0.0) || tau < 1e-14 * std::max(1.0, std::abs(t_n)))
        throw std::invalid_argument("step: tau must be positive and not below 1e-14 of the time scale");
    if (!(opts.theta >= 0.0 && opts.theta <= 1.0)) throw std::invalid_argument("step: theta must lie in [0,1]");
    const double t_next = t_n + tau;
    const double theta = opts.theta;

    const AssembledOperator next = assemble_operator(space, spec, t_next, opts.lumped);
    SparseMatrix system = next.mass + (tau * theta) * next.matrix;
    NodalVector rhs = next.mass * u_n;
    if (theta < 1.0) {
        const AssembledOperator now = assemble_operator(space, spec, t_n, opts.lumped);
        rhs -= (tau * (1.0 - theta)) * (now.matrix * u_n);
        if (!f.is_zero()) rhs += (tau * (1.0 - theta)) * load_vector(space, f, t_n);
    }
    if (!f.is_zero() && theta > 0.0) rhs += (tau * theta) * load_vector(space, f, t_next);
    system.makeCompressed();
    return detail::solve_checked(system, rhs);
}

/// Discrete solution u^0 ... u^N on a time grid.
struct Trajectory {
    TimeGrid grid;
    std::vector<NodalVector> states;
    FemSpace space;
    SourceSpec source;
    StepOptions options;

    std::size_t size() const { return states.size(); }
    SparseMatrix mass() const { return assemble_mass(space, options.lumped); }

    /// Backward difference (u^k - u^{k-1}) / tau_{k-1}, k >= 1.
    NodalVector difference(std::size_t k) const {
        return (states.at(k) - states.at(k - 1)) / grid.tau(k - 1);
    }
};

inline Trajectory solve_cauchy(const FemSpace& space, const FormSpec& spec, const SourceSpec& f,
                               const NodalVector& u0, const TimeGrid& grid, const StepOptions& opts = {}) {
    space.check_dofs(u0, "solve_cauchy");
    if (grid.tau(0) < 1e-14 * grid.T()) throw std::invalid_argument("solve_cauchy: tau below 1e-14 T");
    Trajectory traj{grid, {}, space, f, opts};
    traj.states.reserve(grid.n_steps() + 1);
    traj.states.push_back(u0);
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        try {
            traj.states.push_back(step(space, spec, f, traj.states.back(), grid.time(k), grid.tau(k), opts));
        } catch (const SolverFailure& e) {
            throw SolverFailure(std::string(e.what()) + " (step " + std::to_string(k) + ")", e.residual(), k);
        }
    }
    return traj;
}

/// CSV with header t,x_0,...,x_n (all mesh nodes), 17 significant digits.
inline void write_csv(std::ostream& os, const Trajectory& traj) {
    const std::size_t n = traj.space.n_nodes();
    os << "t";
    for (std::size_t i = 0; i < n; ++i) os << ",x_" << i;
    os << '\n';
    char buf[40];
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", traj.grid.time(k));
        os << buf;
        const NodalVector full = traj.space.extend(traj.states[k]);
        for (Eigen::Index i = 0; i < full.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", full(i));
            os << ',' << buf;
        }
        os << '\n';
    }
}

inline std::string to_csv(const Trajectory& traj) {
    std::ostringstream os;
    write_csv(os, traj);
    return os.str();
}

/// Discrete L2(0,T;H) norm, right-endpoint rule.
inline double l2_time_norm(const Trajectory& traj) {
    const SparseMatrix m = traj.mass();
    double sum = 0.0;
    for (std::size_t k = 1; k < traj.states.size(); ++k)
        sum += traj.grid.tau(k - 1) * traj.states[k].dot(m * traj.states[k]);
    return std::sqrt(sum);
}

inline double l2_time_distance(const Trajectory& a, const Trajectory& b) {
    if (a.states.size() != b.states.size()) throw std::invalid_argument("trajectories on different grids");
    const SparseMatrix m = a.mass();
    double sum = 0.0;
    for (std::size_t k = 1; k < a.states.size(); ++k) {
        const NodalVector d = a.states[k] - b.states[k];
        sum += a.grid.tau(k - 1) * d.dot(m * d);
    }
    return std::sqrt(sum);
}

/// Discrete defect of  |u(t)-Pu(t)|^2 - |u(0)-Pu(0)|^2 = 2 int_0^t <u', u-Pu> ds,
/// maximized over grid points. The increment over [t_j, t_{j+1}] is paired
/// with the projection defect at t_j.
inline double energy_identity_residual(const Trajectory& traj, const ConvexSet& c) {
    if (c.blocks() != 1 || !(c.mesh() == traj.space.mesh()))
        throw std::invalid_argument("energy_identity_residual: convex set does not live on the trajectory mesh");
    const SparseMatrix m = traj.mass();
    auto defect = [&](const NodalVector& u) {
        return NodalVector(u - traj.space.restrict_to_dofs(c.project(traj.space.extend(u))));
    };
    const NodalVector e0 = defect(traj.states.front());
    const double base = e0.dot(m * e0);
    double integral = 0.0;
    double worst = 0.0;
    NodalVector e_prev = e0;
    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const double tau = traj.grid.tau(k - 1);
        integral += 2.0 * tau * traj.difference(k).dot(m * e_prev);
        const NodalVector e = defect(traj.states[k]);
        worst = std::max(worst, std::abs(e.dot(m * e) - base - integral));
        e_prev = e;
    }
    return worst;
}

namespace detail {

/// Norms of the discrete V and V' built on the Gram matrix G = K + M.
struct DualNorms {
    SparseMatrix gram;
    SparseMatrix mass;
    Eigen::SimplicialLLT<SparseMatrix> gram_factor;

    DualNorms(const FemSpace& space, bool lumped)
        : gram(v_gram(space, lumped)), mass(assemble_mass(space, lumped)), gram_factor(gram) {}

    double v_norm_sq(const NodalVector& u) const { return u.dot(gram * u); }
    double h_norm_sq(const NodalVector& u) const { return u.dot(mass * u); }
    /// Dual norm of the functional v -> g^T v.
    double dual_norm_sq(const NodalVector& g) const { return g.dot(gram_factor.solve(g)); }
};

}  // namespace detail

/// ||u||_MR / (||u0||_H + ||f||_{L2(0,T;V')}) with
/// ||u||_MR^2 = sum tau |u^k|_V^2 + sum tau |du^k|_{V'}^2.
inline double apriori_ratio(const Trajectory& traj, const NodalVector& u0, const SourceSpec& f) {
    traj.space.check_dofs(u0, "apriori_ratio");
    const detail::DualNorms norms(traj.space, traj.options.lumped);
    double f_sq = 0.0;
    double mr_sq = 0.0;
    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const double tau = traj.grid.tau(k - 1);
        mr_sq += tau * norms.v_norm_sq(traj.states[k]);
        mr_sq += tau * norms.dual_norm_sq(norms.mass * traj.difference(k));
        if (!f.is_zero()) f_sq += tau * norms.dual_norm_sq(load_vector(traj.space, f, traj.grid.time(k)));
    }
    const double data = std::sqrt(norms.h_norm_sq(u0)) + std::sqrt(f_sq);
    if (!(data > 0.0)) throw std::invalid_argument("apriori_ratio: zero data (u0 = 0 and f = 0)");
    return std::sqrt(mr_sq) / data;
}

}  // namespace forminv

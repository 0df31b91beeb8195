#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "forminv/errors.hpp"
#include "forminv/evolution.hpp"
#include "forminv/forms.hpp"
#include "forminv/mesh_space.hpp"

namespace forminv {

/// Solution-dependent diffusion m(t,x,y) with declared bounds eta <= m <= bound.
struct QuasilinearSpec {
    std::function<double(double, double, double)> m;
    double eta = 1.0;
    double bound = 1.0;
};

struct FixedPointReport {
    std::size_t iterations = 0;
    /// ||S(g_k) - g_k|| in discrete L2(0,T;H), one entry per iteration.
    std::vector<double> residual_history;
    bool converged = false;
    double apriori_ratio = 0.0;
    /// apriori ratio of every computed S(g_k), seed included.
    std::vector<double> apriori_ratios;
    double damping = 1.0;
    double tol = 0.0;

    nlohmann::json to_json() const {
        return {{"iterations", iterations},   {"residual_history", residual_history},
                {"converged", converged},     {"apriori_ratio", apriori_ratio},
                {"apriori_ratios", apriori_ratios}, {"damping", damping},
                {"tol", tol},                 {"seed_trajectory", "constant extension of u0"}};
    }
};

/// S(g): the linear problem with a(t,x) = m(t, x, g(t)(x)), g sampled at the
/// grid time nearest to t (the step's right endpoint for theta = 1) and at
/// cell midpoints.
inline Trajectory freeze_and_solve(const FemSpace& space, const QuasilinearSpec& q, const Trajectory& g,
                                   const SourceSpec& f, const NodalVector& u0, const TimeGrid& grid,
                                   const StepOptions& opts = {}) {
    if (g.states.size() != grid.n_steps() + 1 || !(g.space.mesh() == space.mesh()))
        throw std::invalid_argument("freeze_and_solve: g is not defined on the same grid and space");
    auto frozen = std::make_shared<std::vector<NodalVector>>();
    frozen->reserve(g.states.size());
    for (const auto& s : g.states) frozen->push_back(g.space.extend(s));

    FormSpec spec;
    spec.ellipticity = std::nullopt;  // checked below against [eta, bound]
    const Mesh mesh = space.mesh();
    spec.diffusion = [frozen, q, grid, mesh](double t, double x) {
        const std::size_t k = grid.nearest(t);
        const auto cell = std::min<std::size_t>(static_cast<std::size_t>(std::max(0.0, x / mesh.h())),
                                                mesh.n_cells() - 1);
        const NodalVector& gk = (*frozen)[k];
        const double y = 0.5 * (gk(static_cast<Eigen::Index>(cell)) + gk(static_cast<Eigen::Index>(cell + 1)));
        const double value = q.m(t, x, y);
        if (!(value >= q.eta && value <= q.bound)) {
            std::ostringstream os;
            os << "quasilinear coefficient m = " << value << " outside [" << q.eta << ", " << q.bound
               << "] at (t, x, y) = (" << t << ", " << x << ", " << y << ")";
            throw ContractViolation(os.str());
        }
        return value;
    };
    return solve_cauchy(space, spec, f, u0, grid, opts);
}

struct QuasilinearOptions {
    StepOptions step;
    std::size_t max_iter = 50;
    double tol = 1e-8;
    double damping = 1.0;
    /// Called with every S(g_k), seed included.
    std::function<void(const Trajectory&)> on_iterate;
};

struct QuasilinearResult {
    Trajectory solution;
    FixedPointReport report;
};

/// Damped Picard iteration g_{k+1} = (1-l) g_k + l S(g_k) from the constant
/// extension of u0. Iteration k reports the fixed-point residual
/// ||S(g_k) - g_k||; the returned trajectory is the last g_k.
inline QuasilinearResult solve_quasilinear(const FemSpace& space, const QuasilinearSpec& q, const SourceSpec& f,
                                           const NodalVector& u0, const TimeGrid& grid,
                                           const QuasilinearOptions& opts = {}) {
    if (opts.max_iter < 1) throw std::invalid_argument("solve_quasilinear: max_iter must be >= 1");
    if (!(opts.tol > 0.0)) throw std::invalid_argument("solve_quasilinear: tol must be > 0");
    if (!(opts.damping > 0.0 && opts.damping <= 1.0))
        throw std::invalid_argument("solve_quasilinear: damping must lie in (0, 1]");
    space.check_dofs(u0, "solve_quasilinear");

    Trajectory g{grid, std::vector<NodalVector>(grid.n_steps() + 1, u0), space, f, opts.step};
    FixedPointReport report;
    report.damping = opts.damping;
    report.tol = opts.tol;

    const bool nontrivial = u0.squaredNorm() > 0.0 || !f.is_zero();
    auto evaluate = [&](const Trajectory& arg) {
        Trajectory s = freeze_and_solve(space, q, arg, f, u0, grid, opts.step);
        if (nontrivial) report.apriori_ratios.push_back(apriori_ratio(s, u0, f));
        if (opts.on_iterate) opts.on_iterate(s);
        return s;
    };

    Trajectory s = evaluate(g);
    const double lambda = opts.damping;
    for (std::size_t k = 1; k <= opts.max_iter; ++k) {
        for (std::size_t n = 0; n < g.states.size(); ++n)
            g.states[n] = (1.0 - lambda) * g.states[n] + lambda * s.states[n];
        s = evaluate(g);
        const double residual = l2_time_distance(s, g);
        report.residual_history.push_back(residual);
        report.iterations = k;
        if (residual <= opts.tol) {
            report.converged = true;
            break;
        }
    }
    if (!report.apriori_ratios.empty()) report.apriori_ratio = report.apriori_ratios.back();
    return {std::move(g), std::move(report)};
}

}  // namespace forminv

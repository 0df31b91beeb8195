#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forminv/evolution.hpp"
#include "forminv/mesh_space.hpp"

namespace forminv {

/// Time samples of an H-valued path with a diagonal (lumped) H inner product.
struct SampledPath {
    TimeGrid grid;
    std::vector<NodalVector> values;
    Eigen::VectorXd weights;

    SampledPath(TimeGrid g, std::vector<NodalVector> v, Eigen::VectorXd w)
        : grid(std::move(g)), values(std::move(v)), weights(std::move(w)) {
        if (values.size() != grid.n_steps() + 1) throw std::invalid_argument("SampledPath: one value per grid point");
        for (const auto& x : values)
            if (x.size() != weights.size()) throw std::invalid_argument("SampledPath: value/weight length mismatch");
        if ((weights.array() <= 0.0).any()) throw std::invalid_argument("SampledPath: weights must be positive");
    }

    /// All-node states of a trajectory under the lumped mass of its mesh.
    static SampledPath from_trajectory(const Trajectory& traj) {
        std::vector<NodalVector> v;
        v.reserve(traj.states.size());
        for (const auto& s : traj.states) v.push_back(traj.space.extend(s));
        return SampledPath(traj.grid, std::move(v), traj.space.mesh().lumped_weights());
    }

    double norm_sq(const NodalVector& x) const { return (weights.array() * x.array().square()).sum(); }
    double norm(const NodalVector& x) const { return std::sqrt(norm_sq(x)); }

    NodalVector difference(std::size_t k) const { return (values.at(k) - values.at(k - 1)) / grid.tau(k - 1); }

    /// (sum tau |du^k|^2)^{1/2}
    double derivative_norm() const {
        double sum = 0.0;
        for (std::size_t k = 1; k < values.size(); ++k) sum += grid.tau(k - 1) * norm_sq(difference(k));
        return std::sqrt(sum);
    }

    SampledPath map(const std::function<NodalVector(const NodalVector&)>& s) const {
        std::vector<NodalVector> out;
        out.reserve(values.size());
        for (const auto& x : values) out.push_back(s(x));
        return SampledPath(grid, std::move(out), weights);
    }
};

struct DifferenceQuotientReport {
    double C_est = 0.0;
    double C_true = 0.0;
    /// Allowance for rounding; the discrete inequality itself holds with no
    /// quadrature slack for shifts that are grid multiples.
    double eps_quad = 0.0;
    bool pass = true;

    double ratio() const { return C_true > 0.0 ? C_est / C_true : 0.0; }

    nlohmann::json to_json() const {
        return {{"C_est", C_est}, {"C_true", C_true}, {"ratio", ratio()}, {"eps_quad", eps_quad}, {"pass", pass},
                {"direction", "only (i) => (ii) is checked; the converse has no finite certificate"}};
    }
};

/// C_est = max over shifts h of (int_c^d |u(t+h)-u(t)|^2 dt)^{1/2} / |h| (trapezoid rule);
/// C_true = (int_0^T |u'|^2)^{1/2}. Requires a uniform grid, c and d grid points and
/// integer shifts s (h = s tau) with |h| < min(c, T-d).
inline DifferenceQuotientReport difference_quotient_constant(const SampledPath& path, double c, double d,
                                                             std::span<const long> shifts) {
    const TimeGrid& grid = path.grid;
    const double T = grid.T();
    const double tau = grid.tau(0);
    for (std::size_t k = 1; k < grid.n_steps(); ++k)
        if (std::abs(grid.tau(k) - tau) > 1e-9 * tau)
            throw std::invalid_argument("difference_quotient_constant: needs a uniform grid");
    if (!(0.0 < c && c < d && d < T)) throw std::invalid_argument("difference_quotient_constant: need 0 < c < d < T");
    if (shifts.empty()) throw std::invalid_argument("difference_quotient_constant: no shifts");
    auto grid_index = [&](double t) {
        const double r = t / tau;
        const double k = std::round(r);
        if (std::abs(r - k) > 1e-8 * std::max(1.0, r))
            throw std::invalid_argument("difference_quotient_constant: window ends must be grid points");
        return static_cast<long>(k);
    };
    const long ic = grid_index(c);
    const long id = grid_index(d);

    DifferenceQuotientReport report;
    report.C_true = path.derivative_norm();
    for (long s : shifts) {
        const double h = static_cast<double>(s) * tau;
        if (s == 0 || !(std::abs(h) < std::min(c, T - d)))
            throw std::invalid_argument("difference_quotient_constant: shift violates 0 < |h| < min(c, T-d)");
        double integral = 0.0;
        for (long k = ic; k <= id; ++k) {
            const double w = (k == ic || k == id) ? 0.5 * tau : tau;
            integral += w * path.norm_sq(path.values[static_cast<std::size_t>(k + s)] -
                                         path.values[static_cast<std::size_t>(k)]);
        }
        report.C_est = std::max(report.C_est, std::sqrt(integral) / std::abs(h));
    }
    report.eps_quad = 1e-12;
    report.pass = report.C_est <= report.C_true * (1.0 + report.eps_quad);
    return report;
}

struct LipschitzReport {
    double derivative_norm_mapped = 0.0;  // |(S o u)'|
    double derivative_norm = 0.0;         // |u'|
    double L = 0.0;
    std::optional<std::size_t> violating_step;  // first k with |S u^k - S u^{k-1}| > L |u^k - u^{k-1}|
    bool pass = true;

    double ratio() const { return derivative_norm > 0.0 ? derivative_norm_mapped / derivative_norm : 0.0; }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"derivative_norm_mapped", derivative_norm_mapped},
                            {"derivative_norm", derivative_norm},
                            {"L", L},
                            {"ratio", ratio()},
                            {"pass", pass}};
        j["violating_step"] = violating_step ? nlohmann::json(*violating_step) : nlohmann::json(nullptr);
        return j;
    }
};

/// Checks |(S o u)'|_{L2(0,T;H)} <= L |u'|_{L2(0,T;H)} and the stepwise Lipschitz bound.
inline LipschitzReport lipschitz_composition_check(const SampledPath& path,
                                                   const std::function<NodalVector(const NodalVector&)>& s,
                                                   double L) {
    if (!(L > 0.0)) throw std::invalid_argument("lipschitz_composition_check: L must be > 0");
    const SampledPath mapped = path.map(s);
    LipschitzReport r;
    r.L = L;
    r.derivative_norm = path.derivative_norm();
    r.derivative_norm_mapped = mapped.derivative_norm();
    for (std::size_t k = 1; k < path.values.size(); ++k) {
        const double lhs = mapped.norm(mapped.values[k] - mapped.values[k - 1]);
        const double rhs = L * path.norm(path.values[k] - path.values[k - 1]);
        if (lhs > rhs * (1.0 + 1e-12) + 1e-300) {
            r.violating_step = k;
            break;
        }
    }
    r.pass = r.derivative_norm_mapped <= L * r.derivative_norm * (1.0 + 1e-12) && !r.violating_step;
    return r;
}

}  // namespace forminv

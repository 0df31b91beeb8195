#pragma once

// Test-only helpers: random scenario generators and independent oracles.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "forminv/forms.hpp"
#include "forminv/evolution.hpp"
#include "forminv/mesh_space.hpp"
#include "forminv/tables.hpp"

namespace forminv::fixtures {

/// Random piecewise-constant data on [0,T] x [0,L].
struct RandomScenario {
    std::shared_ptr<PiecewiseConstant2D> diffusion;
    std::shared_ptr<PiecewiseConstant> beta_left, beta_right;
    std::shared_ptr<PiecewiseConstant2D> source;
    std::vector<double> u0_nodes;  // on all mesh nodes
};

inline std::vector<double> random_breaks(std::mt19937_64& rng, std::size_t pieces, double span) {
    std::uniform_real_distribution<double> u(0.0, span);
    std::vector<double> b{0.0};
    for (std::size_t i = 1; i < pieces; ++i) b.push_back(u(rng));
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    return b;
}

inline std::shared_ptr<PiecewiseConstant2D> random_table_2d(std::mt19937_64& rng, double T, double L, double lo,
                                                            double hi) {
    std::uniform_real_distribution<double> val(lo, hi);
    const auto tb = random_breaks(rng, 4, T);
    const auto xb = random_breaks(rng, 5, L);
    std::vector<std::vector<double>> v(tb.size(), std::vector<double>(xb.size()));
    for (auto& row : v)
        for (auto& x : row) x = val(rng);
    return std::make_shared<PiecewiseConstant2D>(tb, xb, v);
}

inline std::shared_ptr<PiecewiseConstant> random_table_1d(std::mt19937_64& rng, double span, double lo, double hi) {
    std::uniform_real_distribution<double> val(lo, hi);
    const auto b = random_breaks(rng, 4, span);
    std::vector<double> v(b.size());
    for (auto& x : v) x = val(rng);
    return std::make_shared<PiecewiseConstant>(b, v);
}

/// a in [1,3], beta in [0, beta_max], f in [f_lo, f_hi], u0 in [u_lo, u_hi].
inline RandomScenario random_scenario(std::uint64_t seed, const Mesh& mesh, double T, double f_lo, double f_hi,
                                      double u_lo, double u_hi, double beta_max = 2.0) {
    std::mt19937_64 rng(seed);
    RandomScenario s;
    s.diffusion = random_table_2d(rng, T, mesh.length(), 1.0, 3.0);
    s.beta_left = random_table_1d(rng, T, 0.0, beta_max);
    s.beta_right = random_table_1d(rng, T, 0.0, beta_max);
    s.source = random_table_2d(rng, T, mesh.length(), f_lo, f_hi);
    std::uniform_real_distribution<double> u(u_lo, u_hi);
    for (std::size_t i = 0; i < mesh.n_nodes(); ++i) s.u0_nodes.push_back(u(rng));
    return s;
}

inline FormSpec form_of(const RandomScenario& s) {
    FormSpec spec;
    auto a = s.diffusion;
    auto bl = s.beta_left;
    auto br = s.beta_right;
    spec.diffusion = [a](double t, double x) { return (*a)(t, x); };
    spec.ellipticity = 1.0;
    spec.beta_left = [bl](double t) { return (*bl)(t); };
    spec.beta_right = [br](double t) { return (*br)(t); };
    return spec;
}

inline SourceSpec source_of(const RandomScenario& s, SourceSign sign) {
    SourceSpec f;
    auto g = s.source;
    f.f = [g](double t, double x) { return (*g)(t, x); };
    f.sign = sign;
    return f;
}

inline NodalVector initial_of(const RandomScenario& s, const FemSpace& space) {
    NodalVector full(static_cast<Eigen::Index>(s.u0_nodes.size()));
    for (std::size_t i = 0; i < s.u0_nodes.size(); ++i) full(static_cast<Eigen::Index>(i)) = s.u0_nodes[i];
    return space.restrict_to_dofs(full);
}

/// Backward Euler with lumped mass, assembled directly from the three-point
/// formulas and solved by the Thomas algorithm. Independent of the library's
/// sparse assembly and factorization.
inline std::vector<double> oracle_backward_euler_step(const FemSpace& space, const FormSpec& spec,
                                                      const SourceSpec& f, const std::vector<double>& u, double t_next,
                                                      double tau) {
    const Mesh& mesh = space.mesh();
    const std::size_t nn = mesh.n_nodes();
    const double h = mesh.h();
    std::vector<double> lower(nn, 0.0), diag(nn, 0.0), upper(nn, 0.0), rhs(nn, 0.0);
    for (std::size_t c = 0; c < mesh.n_cells(); ++c) {
        const double x = (static_cast<double>(c) + 0.5) * h;
        const double k = spec.diffusion(t_next, x) / h;
        diag[c] += tau * k;
        diag[c + 1] += tau * k;
        upper[c] -= tau * k;
        lower[c + 1] -= tau * k;
        const double load = f.f ? 0.5 * h * f.f(t_next, x) : 0.0;
        rhs[c] += tau * load;
        rhs[c + 1] += tau * load;
    }
    diag[0] += tau * spec.beta_left(t_next);
    diag[nn - 1] += tau * spec.beta_right(t_next);
    for (std::size_t i = 0; i < nn; ++i) {
        const double m = (i == 0 || i == nn - 1) ? 0.5 * h : h;
        diag[i] += m;
        rhs[i] += m * u[i];
    }
    std::size_t first = 0, last = nn - 1;
    if (space.bc() == BoundaryKind::dirichlet) {
        first = 1;
        last = nn - 2;
    }
    // Thomas on [first, last]
    std::vector<double> c2(nn, 0.0), d2(nn, 0.0), out(nn, 0.0);
    c2[first] = upper[first] / diag[first];
    d2[first] = rhs[first] / diag[first];
    for (std::size_t i = first + 1; i <= last; ++i) {
        const double denom = diag[i] - lower[i] * c2[i - 1];
        c2[i] = upper[i] / denom;
        d2[i] = (rhs[i] - lower[i] * d2[i - 1]) / denom;
    }
    out[last] = d2[last];
    for (std::size_t i = last; i-- > first;) out[i] = d2[i] - c2[i] * out[i + 1];
    return out;
}

inline double max_abs(const std::vector<double>& a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace forminv::fixtures

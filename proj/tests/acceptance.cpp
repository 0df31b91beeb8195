// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "forminv/convex.hpp"
#include "forminv/criterion.hpp"
#include "forminv/evolution.hpp"
#include "forminv/quasilinear.hpp"
#include "forminv/sobolev_tools.hpp"
#include "support.hpp"

using namespace forminv;
namespace fs = std::filesystem;

namespace {

constexpr double kTol = 1e-10;

struct Check {
    bool ok = true;
    std::ostringstream detail;
    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << " [" << what << "]";
        }
    }
};

SampleOptions audit_samples(std::uint64_t seed) {
    SampleOptions o;
    for (int k = 0; k < 10; ++k) o.t_samples.push_back(0.1 * k);
    o.v_samples = 200;
    o.seed = seed;
    return o;
}

FormSpec without_boundary_terms(FormSpec s) {
    s.beta_left = [](double) { return 0.0; };
    s.beta_right = [](double) { return 0.0; };
    return s;
}

double min_over(const Trajectory& t) {
    double m = INFINITY;
    for (const auto& s : t.states) m = std::min(m, s.minCoeff());
    return m;
}
double max_over(const Trajectory& t) {
    double m = -INFINITY;
    for (const auto& s : t.states) m = std::max(m, s.maxCoeff());
    return m;
}

const TimeGrid kGrid = TimeGrid::with_step(1.0, 0.05);
constexpr std::size_t kCells = 32;

// ---- 1 -------------------------------------------------------------------

double analytic_error(long long n, double tau) {
    const FemSpace sp = build_space(n, 1.0, BoundaryKind::dirichlet);
    const auto exact = [](double t, double x) {
        return std::exp(-std::numbers::pi * std::numbers::pi * t) * std::sin(std::numbers::pi * x);
    };
    const NodalVector u0 = interpolate(sp, [&](double x) { return exact(0.0, x); });
    const Trajectory tr =
        solve_cauchy(sp, FormSpec::laplacian(), SourceSpec::zero(), u0, TimeGrid::with_step(0.1, tau));
    double err = 0.0;
    for (std::size_t k = 0; k < tr.states.size(); ++k)
        for (std::size_t d = 0; d < sp.n_dofs(); ++d)
            err = std::max(err, std::abs(tr.states[k](static_cast<Eigen::Index>(d)) -
                                         exact(tr.grid.time(k), sp.dof_coordinate(d))));
    return err;
}

void analytic(Check& c) {
    const double e0 = analytic_error(64, 1e-3);
    const double e1 = analytic_error(128, 5e-4);
    const double e2 = analytic_error(256, 2.5e-4);
    c.detail << " err(64,1e-3)=" << e0 << " err(128)=" << e1 << " err(256)=" << e2;
    c.require(e0 <= 5e-3, "error above 5e-3");
    c.require(e1 < e0 && e2 < e1, "refinement not monotone");
}

// ---- 2-6: the randomized families, audited by the criterion as they go ------

struct FamilyStats {
    double worst_criterion = INFINITY;
    std::size_t audits = 0;
    std::size_t min_samples = SIZE_MAX;
    void add(const CriterionReport& r) {
        worst_criterion = std::min(worst_criterion, r.min_value);
        min_samples = std::min(min_samples, r.n_samples);
        ++audits;
        all_pass = all_pass && r.pass;
    }
    bool all_pass = true;
};

void positivity(Check& c, FamilyStats& audit) {
    double worst = INFINITY;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const FemSpace sp = build_space(kCells, 1.0, BoundaryKind::robin);
        const auto sc = fixtures::random_scenario(100 + s, sp.mesh(), 1.0, 0.0, 2.0, 0.0, 1.0);
        const FormSpec spec = fixtures::form_of(sc);
        const SourceSpec f = fixtures::source_of(sc, SourceSign::nonneg);
        const Trajectory tr = solve_cauchy(sp, spec, f, fixtures::initial_of(sc, sp), kGrid);
        worst = std::min(worst, min_over(tr));
        audit.add(check_invariance_criterion(sp, spec, f, ConvexSet::positive_cone(sp.mesh()), audit_samples(s)));
    }
    c.detail << " min nodal value " << worst << " over 20 scenarios";
    c.require(worst >= -kTol, "negative value");
}

void submarkov(Check& c, FamilyStats& audit) {
    double worst = -INFINITY;
    double worst_scaled = 0.0;
    double linearity = 0.0;
    constexpr double lambda = 3.0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const FemSpace sp = build_space(kCells, 1.0, BoundaryKind::robin);
        const auto sc = fixtures::random_scenario(200 + s, sp.mesh(), 1.0, -2.0, 0.0, -1.0, 1.0);
        const FormSpec spec = fixtures::form_of(sc);
        const SourceSpec f = fixtures::source_of(sc, SourceSign::nonpos);
        const NodalVector u0 = fixtures::initial_of(sc, sp);
        const Trajectory tr = solve_cauchy(sp, spec, f, u0, kGrid);
        worst = std::max(worst, max_over(tr));
        audit.add(check_invariance_criterion(sp, spec, f, ConvexSet::cap(sp.mesh(), 1.0), audit_samples(s)));

        SourceSpec f3 = f;
        f3.f = [g = f.f](double t, double x) { return lambda * g(t, x); };
        const Trajectory t3 = solve_cauchy(sp, spec, f3, NodalVector(lambda * u0), kGrid);
        worst_scaled = std::max(worst_scaled, max_over(t3) - lambda);
        for (std::size_t k = 0; k < tr.states.size(); ++k)
            linearity = std::max(linearity, (t3.states[k] - lambda * tr.states[k]).cwiseAbs().maxCoeff());
        audit.add(check_invariance_criterion(sp, spec, f3, ConvexSet::cap(sp.mesh(), lambda), audit_samples(s)));
    }
    c.detail << " max nodal value " << worst << "; level 3: excess " << worst_scaled << ", linearity defect "
             << linearity;
    c.require(worst <= 1.0 + kTol, "exceeds 1");
    c.require(worst_scaled <= lambda * kTol, "exceeds 3 at level 3");
    c.require(linearity <= 1e-12, "scaled run is not 3x the original");
}

void dirichlet_neumann(Check& c, FamilyStats& audit) {
    double worst_gap = -INFINITY;
    double worst_min = INFINITY;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const FemSpace d = build_space(kCells, 1.0, BoundaryKind::dirichlet);
        const FemSpace n = build_space(kCells, 1.0, BoundaryKind::neumann);
        const auto sc = fixtures::random_scenario(300 + s, n.mesh(), 1.0, 0.0, 2.0, 0.0, 1.0);
        const FormSpec spec = without_boundary_terms(fixtures::form_of(sc));
        const SourceSpec f = fixtures::source_of(sc, SourceSign::nonneg);
        const Trajectory td = solve_cauchy(d, spec, f, fixtures::initial_of(sc, d), kGrid);
        const Trajectory tn = solve_cauchy(n, spec, f, fixtures::initial_of(sc, n), kGrid);
        for (std::size_t k = 0; k < td.states.size(); ++k) {
            const NodalVector ud = d.extend(td.states[k]);
            const NodalVector un = tn.states[k];
            for (Eigen::Index i = 1; i + 1 < ud.size(); ++i) {
                worst_gap = std::max(worst_gap, ud(i) - un(i));
                worst_min = std::min(worst_min, ud(i));
            }
        }
        const std::vector<FormBlock> pair{{d, spec, f}, {n, spec, f}};
        audit.add(check_two_set_criterion(pair, ConvexSet::positive_cone(n.mesh(), 2), ConvexSet::domination(n.mesh()),
                                          audit_samples(s)));
    }
    c.detail << " max(u_D - u_N) " << worst_gap << ", min u_D " << worst_min;
    c.require(worst_min >= -kTol, "u_D negative");
    c.require(worst_gap <= kTol, "u_D above u_N");
}

void robin(Check& c, FamilyStats& audit) {
    double worst_gap = -INFINITY;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const FemSpace sp = build_space(kCells, 1.0, BoundaryKind::robin);
        const auto sc = fixtures::random_scenario(400 + s, sp.mesh(), 1.0, 0.0, 2.0, 0.0, 1.0, 1.0);
        std::mt19937_64 rng(500 + s);
        const auto extra_l = fixtures::random_table_1d(rng, 1.0, 0.0, 2.0);
        const auto extra_r = fixtures::random_table_1d(rng, 1.0, 0.0, 2.0);
        FormSpec b1 = fixtures::form_of(sc);
        if (s == 0) b1 = without_boundary_terms(b1);  // beta1 = 0: below the Neumann solution
        FormSpec b2 = b1;
        b2.beta_left = [b = b1.beta_left, extra_l](double t) { return b(t) + (*extra_l)(t); };
        b2.beta_right = [b = b1.beta_right, extra_r](double t) { return b(t) + (*extra_r)(t); };
        const SourceSpec f = fixtures::source_of(sc, SourceSign::nonneg);
        const NodalVector u0 = fixtures::initial_of(sc, sp);
        const Trajectory t1 = solve_cauchy(sp, b1, f, u0, kGrid);
        const Trajectory t2 = solve_cauchy(sp, b2, f, u0, kGrid);
        for (std::size_t k = 0; k < t1.states.size(); ++k)
            worst_gap = std::max(worst_gap, (t2.states[k] - t1.states[k]).maxCoeff());
        const std::vector<FormBlock> pair{{sp, b2, f}, {sp, b1, f}};
        const Mesh& mesh = sp.mesh();
        audit.add(check_two_set_criterion(pair, ConvexSet::positive_cone(mesh, 2), ConvexSet::domination(mesh),
                                          audit_samples(s)));
    }
    c.detail << " max(u_b2 - u_b1) " << worst_gap << " over 10 scenarios (one with beta1 = 0)";
    c.require(worst_gap <= kTol, "u_b2 above u_b1");
}

void criterion(Check& c, const FamilyStats& audit) {
    c.detail << " " << audit.audits << " audits, min value " << audit.worst_criterion << ", >= " << audit.min_samples
             << " samples each;";
    c.require(audit.all_pass && audit.worst_criterion >= -kTol, "audit refuted a valid scenario");
    c.require(audit.min_samples >= 2000, "too few samples");

    // Left half drives the right half downward through a nonlocal coupling.
    const FemSpace sp = build_space(16, 1.0, BoundaryKind::neumann);
    const NodalVector phi = interpolate(sp, [](double x) { return x < 0.5 ? 1.0 : 0.0; });
    const NodalVector psi = interpolate(sp, [](double x) { return x > 0.5 ? 1.0 : 0.0; });
    FormSpec spec = FormSpec::laplacian();
    spec.rank_one = RankOneTerm{phi, psi, [](double) { return 500.0; }};
    const ConvexSet cone = ConvexSet::positive_cone(sp.mesh());
    const CriterionReport witness = check_invariance_criterion(sp, spec, SourceSpec::zero(), cone, audit_samples(1));
    const NodalVector u0 =
        interpolate(sp, [](double x) { return x < 0.4 ? std::pow(std::sin(std::numbers::pi * x / 0.4), 2) : 0.0; });
    const Trajectory tr = solve_cauchy(sp, spec, SourceSpec::zero(), u0, TimeGrid::with_step(0.2, 1e-3));
    const InvarianceReport inv = verify_trajectory_membership(tr, cone);
    c.detail << " rank-one: criterion min " << witness.min_value << ", worst violation " << inv.worst_violation
             << " at step " << inv.step;
    c.require(!witness.pass, "no negative witness");
    c.require(inv.worst_violation > 1e-6, "trajectory stays in the cone");
}

// ---- 7 -------------------------------------------------------------------

void projections(Check& c) {
    const Mesh mesh(kCells, 1.0);
    const ConvexSet sets[] = {ConvexSet::positive_cone(mesh), ConvexSet::cap(mesh, 1.0),
                              ConvexSet::order_interval(mesh, -0.5, 1.5), ConvexSet::domination(mesh)};
    for (const auto& s : sets) {
        const ProjectionAudit a = check_projection_axioms(s, 1000, 7);
        c.detail << " " << to_string(s.flavor()) << ":" << std::max({a.max_variational, a.max_idempotency_defect,
                                                                      a.max_nonexpansive_excess});
        c.require(a.pass(kTol) && a.samples == 1000, std::string(to_string(s.flavor())) + " axioms");
    }
    const Mesh one(1, 1.0);
    NodalVector x(4);
    x << 2, 2, 0, 0;
    c.require(ConvexSet::domination(one).project(x) == NodalVector::Ones(4), "domination spot check");
}

// ---- 8 -------------------------------------------------------------------

void energy_identity(Check& c) {
    const FemSpace sp = build_space(32, 1.0, BoundaryKind::neumann);
    const NodalVector u0 = interpolate(sp, [](double x) { return std::cos(std::numbers::pi * x) + 0.3; });
    const ConvexSet cone = ConvexSet::positive_cone(sp.mesh());
    std::vector<double> res;
    for (double tau : {4e-3, 2e-3, 1e-3, 5e-4}) {
        const Trajectory tr =
            solve_cauchy(sp, FormSpec::laplacian(), SourceSpec::zero(), u0, TimeGrid::with_step(0.2, tau));
        res.push_back(energy_identity_residual(tr, cone));
    }
    c.detail << " ratios";
    for (std::size_t i = 1; i < res.size(); ++i) {
        const double r = res[i - 1] / res[i];
        c.detail << " " << r;
        c.require(r >= 1.7 && r <= 2.3, "ratio outside [1.7, 2.3]");
    }
}

// ---- 9 -------------------------------------------------------------------

void quasilinear(Check& c) {
    const QuasilinearSpec q{[](double, double, double y) { return 1.0 + 1.0 / (1.0 + y * y); }, 1.0, 2.0};
    const TimeGrid grid = TimeGrid::with_step(0.5, 1e-2);

    const FemSpace d = build_space(32, 1.0, BoundaryKind::dirichlet);
    const NodalVector sin0 = interpolate(d, [](double x) { return std::sin(std::numbers::pi * x); });
    const auto r = solve_quasilinear(d, q, SourceSpec::zero(), sin0, grid);
    const double fixed = l2_time_distance(freeze_and_solve(d, q, r.solution, SourceSpec::zero(), sin0, grid), r.solution);
    c.detail << " iterations " << r.report.iterations << ", residual " << r.report.residual_history.back()
             << ", |S(u)-u| " << fixed << ";";
    c.require(r.report.converged && r.report.iterations <= 50, "Picard did not converge in 50 iterations");
    c.require(r.report.residual_history.back() <= 1e-8 && fixed <= 1e-8, "fixed-point residual above 1e-8");

    const FemSpace n = build_space(32, 1.0, BoundaryKind::neumann);
    const NodalVector u0 = interpolate(n, [](double x) { return x < 0.5 ? 0.0 : 2.0 * (x - 0.5); });
    const auto p = solve_quasilinear(n, q, SourceSpec::constant(1.0), u0, grid);
    const auto [lo, hi] = std::minmax_element(p.report.apriori_ratios.begin(), p.report.apriori_ratios.end());
    c.detail << " nonneg data: min " << min_over(p.solution) << ", apriori spread " << *hi / *lo << ";";
    c.require(p.report.converged && min_over(p.solution) >= -kTol, "nonnegative data lost positivity");
    const auto [lo2, hi2] = std::minmax_element(r.report.apriori_ratios.begin(), r.report.apriori_ratios.end());
    c.require(*hi / *lo <= 10.0 && *hi2 / *lo2 <= 10.0, "apriori ratio spread above 10");

    const QuasilinearSpec constant{[](double, double, double) { return 1.5; }, 1.5, 1.5};
    const auto k = solve_quasilinear(d, constant, SourceSpec::zero(), sin0, grid);
    c.detail << " constant m: " << k.report.iterations << " iteration(s)";
    c.require(k.report.converged && k.report.iterations == 1, "constant m needs more than one iteration");
}

// ---- 10 ------------------------------------------------------------------

void diagnostics(Check& c) {
    const Mesh mesh(16, 1.0);
    const Eigen::VectorXd weights = mesh.lumped_weights();
    NodalVector w(static_cast<Eigen::Index>(mesh.n_nodes()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::cos(0.7 * static_cast<double>(i)) + 0.2;
    w /= std::sqrt((weights.array() * w.array().square()).sum());

    const TimeGrid grid = TimeGrid::with_step(1.0, 1e-3);
    std::vector<NodalVector> v;
    for (double t : grid.times()) v.push_back(t * w);
    const SampledPath path(grid, v, weights);
    const std::vector<long> shifts{1, 2, 3, 4};
    const auto dq = difference_quotient_constant(path, 0.005, 0.995, shifts);
    c.detail << " C_est " << dq.C_est << " / C_true " << dq.C_true << ";";
    c.require(std::abs(dq.C_true - 1.0) <= 1e-12, "C_true is not 1");
    c.require(dq.pass && std::abs(dq.C_est / dq.C_true - 1.0) <= 0.02, "C_est not within 2%");

    // a sign-changing path crossing the level 1 as well
    std::vector<NodalVector> moving;
    for (double t : grid.times()) {
        NodalVector x(w.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = 1.5 * std::sin(6.0 * t + 0.4 * static_cast<double>(i));
        moving.push_back(x);
    }
    const SampledPath m(grid, moving, weights);
    const ConvexSet cone = ConvexSet::positive_cone(mesh), cap = ConvexSet::cap(mesh, 1.0);
    const auto pos = lipschitz_composition_check(m, [&](const NodalVector& x) { return cone.project(x); }, 1.0);
    const auto dbl = lipschitz_composition_check(m, [](const NodalVector& x) { return NodalVector(2.0 * x); }, 2.0);
    const auto cp = lipschitz_composition_check(m, [&](const NodalVector& x) { return cap.project(x); }, 1.0);
    c.detail << " Lipschitz ratios " << pos.ratio() << ", " << dbl.ratio() / 2.0 << ", " << cp.ratio();
    c.require(pos.pass && dbl.pass && cp.pass, "Lipschitz composition bound violated");
}

// ---- 11 ------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string(FORMINV_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void cli(Check& c) {
    const fs::path dir = fs::temp_directory_path() / "forminv_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "robin.json")
        << R"({"kind": "robin_monotonicity", "discretization": {"n_cells": 24, "T": 0.2, "tau": 0.01},)"
           R"( "data": {"beta1": {"beta_left": "table:0:0,0.1:0.5"}, "beta2": {"beta_left": 2.0}}})";
    std::ofstream(dir / "bogus.json") << R"({"kind": "no_such_kind"})";
    const std::string cfg = (dir / "robin.json").string();
    const int a = run_cli("run " + cfg + " --seed 11 --out " + (dir / "a").string(), dir / "a.log");
    const int b = run_cli("run " + cfg + " --seed 11 --out " + (dir / "b").string(), dir / "b.log");
    c.require(a == 0 && b == 0, "runs did not exit 0");
    for (const char* name : {"u_beta1.csv", "u_beta2.csv"}) {
        const std::string x = slurp(dir / "a" / name), y = slurp(dir / "b" / name);
        c.require(!x.empty() && x == y, std::string(name) + " differs");
    }
    const int bogus = run_cli("run " + (dir / "bogus.json").string(), dir / "bogus.log");
    c.detail << " exit codes " << a << ", " << b << "; unknown kind -> " << bogus;
    c.require(bogus == 2, "unknown kind did not exit 2");
    c.require(slurp(dir / "bogus.log").find("positivity") != std::string::npos, "valid kinds not listed");
}

}  // namespace

int main() {
    FamilyStats audit;
    const std::vector<std::pair<std::string, std::function<void(Check&)>>> items = {
        {"1 analytic convergence", analytic},
        {"2 positivity", [&](Check& c) { positivity(c, audit); }},
        {"3 sub-Markov", [&](Check& c) { submarkov(c, audit); }},
        {"4 Dirichlet below Neumann", [&](Check& c) { dirichlet_neumann(c, audit); }},
        {"5 Robin monotonicity", [&](Check& c) { robin(c, audit); }},
        {"6 criterion soundness and refutation", [&](Check& c) { criterion(c, audit); }},
        {"7 projection axioms", projections},
        {"8 energy identity first order", energy_identity},
        {"9 quasilinear fixed point", quasilinear},
        {"10 difference quotients and Lipschitz maps", diagnostics},
        {"11 CLI determinism and exit codes", cli},
    };
    int failures = 0;
    for (const auto& [name, fn] : items) {
        Check c;
        try {
            fn(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail << " exception: " << e.what();
        }
        std::printf("%s  %s:%s\n", c.ok ? "PASS" : "FAIL", name.c_str(), c.detail.str().c_str());
        failures += c.ok ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(items.size()) - failures, items.size());
    return failures == 0 ? 0 : 1;
}

#pragma once

// Scenario runner behind the `forminv run` command: reads a JSON scenario,
// executes one of the invariance experiments and writes trajectory CSVs plus
// a flat key-value report.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forminv/convex.hpp"
#include "forminv/criterion.hpp"
#include "forminv/evolution.hpp"
#include "forminv/forms.hpp"
#include "forminv/mesh_space.hpp"
#include "forminv/quasilinear.hpp"
#include "forminv/sobolev_tools.hpp"
#include "forminv/tables.hpp"

namespace forminv::scenario {

using nlohmann::json;

inline const std::vector<std::string>& valid_kinds() {
    static const std::vector<std::string> kinds = {
        "positivity",         "submarkov",  "domination_dirichlet_neumann", "robin_monotonicity",
        "criterion_audit",    "quasilinear", "sobolev_diagnostics"};
    return kinds;
}

/// Invalid configuration; the CLI maps it to exit status 2.
class ScenarioError : public std::runtime_error {
public:
    ScenarioError(std::string field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Reads dotted paths from the user config and records every resolved value
/// (defaults included) so the report can echo it.
class ConfigReader {
public:
    explicit ConfigReader(const json& source) : source_(source) {
        if (!source_.is_object()) throw ScenarioError("", "scenario config must be a JSON object");
    }

    bool has(const std::string& path) const { return lookup(path) != nullptr; }

    json raw(const std::string& path, const json& fallback) {
        const json* node = lookup(path);
        json value = node ? *node : fallback;
        record(path, value);
        return value;
    }

    double number(const std::string& path, double fallback) {
        const json v = raw(path, fallback);
        if (!v.is_number()) throw ScenarioError(path, "expected a number");
        return v.get<double>();
    }

    long long integer(const std::string& path, long long fallback) {
        const json v = raw(path, fallback);
        if (!v.is_number_integer() && !v.is_number_unsigned()) throw ScenarioError(path, "expected an integer");
        return v.get<long long>();
    }

    bool flag(const std::string& path, bool fallback) {
        const json v = raw(path, fallback);
        if (!v.is_boolean()) throw ScenarioError(path, "expected true or false");
        return v.get<bool>();
    }

    std::string text(const std::string& path, const std::string& fallback) {
        const json v = raw(path, fallback);
        if (!v.is_string()) throw ScenarioError(path, "expected a string");
        return v.get<std::string>();
    }

    void override_value(const std::string& path, const json& value) { record(path, value); }

    const json& resolved() const { return resolved_; }

private:
    const json* lookup(const std::string& path) const {
        const json* node = &source_;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (!node->is_object() || !node->contains(key)) return nullptr;
            node = &(*node)[key];
            if (dot == std::string::npos) return node;
            start = dot + 1;
        }
    }

    void record(const std::string& path, const json& value) {
        json* node = &resolved_;
        std::size_t start = 0;
        while (true) {
            const auto dot = path.find('.', start);
            const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (dot == std::string::npos) {
                (*node)[key] = value;
                return;
            }
            node = &(*node)[key];
            start = dot + 1;
        }
    }

    const json& source_;
    json resolved_ = json::object();
};

/// A named profile s -> value on [0, span]: zero, one, sin_pi, bump,
/// table:b0:v0,b1:v1,... or a JSON number.
struct Profile {
    std::string name;
    std::function<double(double)> fn;
    double lo = 0.0;  // bounds of the profile over its domain
    double hi = 0.0;
};

inline Profile parse_profile(const json& value, double span, const std::string& field) {
    if (value.is_number()) {
        const double c = value.get<double>();
        return {std::to_string(c), [c](double) { return c; }, c, c};
    }
    if (!value.is_string()) throw ScenarioError(field, "expected a preset name, table:<...> or a number");
    const std::string name = value.get<std::string>();
    if (name == "zero") return {name, [](double) { return 0.0; }, 0.0, 0.0};
    if (name == "one") return {name, [](double) { return 1.0; }, 1.0, 1.0};
    if (name == "sin_pi") return {name, [span](double s) { return std::sin(std::numbers::pi * s / span); }, -1.0, 1.0};
    if (name == "bump")
        return {name, [span](double s) { return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * s / span)); }, 0.0, 1.0};
    if (name.rfind("table:", 0) == 0) {
        try {
            PiecewiseConstant table = PiecewiseConstant::parse(std::string_view(name).substr(6));
            const double lo = table.min_value();
            const double hi = table.max_value();
            return {name, [table](double s) { return table(s); }, lo, hi};
        } catch (const std::invalid_argument& e) {
            throw ScenarioError(field, e.what());
        }
    }
    throw ScenarioError(field, "unknown preset '" + name + "' (expected zero, one, sin_pi, bump, table:<...>)");
}

struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<double> tol;
};

struct ScenarioOutcome {
    int exit_code = 0;
    json report;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline json flatten(const json& value, const std::string& prefix) {
    json out = json::object();
    if (value.is_object()) {
        for (auto it = value.begin(); it != value.end(); ++it) {
            const json sub = flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key());
            for (auto s = sub.begin(); s != sub.end(); ++s) out[s.key()] = s.value();
        }
    } else {
        out[prefix] = value;
    }
    return out;
}

struct Setup {
    std::string kind;
    long long n_cells;
    double length;
    double tau;
    double T;
    StepOptions step;
    BoundaryKind bc;
    std::uint64_t seed;
    double tol;
    std::size_t t_samples;
    std::size_t v_samples;
    TimeGrid grid = TimeGrid::uniform(1.0, 1);
};

struct KindDefaults {
    long long n_cells = 32;
    double tau = 1e-2;
    double T = 0.5;
    std::string bc = "neumann";
    std::string u0 = "bump";
};

inline KindDefaults defaults_for(const std::string& kind) {
    KindDefaults d;
    if (kind == "robin_monotonicity") d.bc = "robin";
    if (kind == "quasilinear" || kind == "sobolev_diagnostics") {
        d.bc = "dirichlet";
        d.u0 = "sin_pi";
    }
    return d;
}

class Runner {
public:
    Runner(const json& config, RunOptions opts) : reader_(config), opts_(std::move(opts)) {}

    ScenarioOutcome run() {
        read_setup();
        try {
            if (setup_.kind == "positivity") run_positivity();
            else if (setup_.kind == "submarkov") run_submarkov();
            else if (setup_.kind == "domination_dirichlet_neumann") run_domination();
            else if (setup_.kind == "robin_monotonicity") run_robin();
            else if (setup_.kind == "criterion_audit") run_criterion_audit();
            else if (setup_.kind == "quasilinear") run_quasilinear();
            else run_sobolev();
        } catch (const SolverFailure& e) {
            runtime_failure(e.what());
        } catch (const ContractViolation& e) {
            runtime_failure(e.what());
        } catch (const NumericDomainError& e) {
            runtime_failure(e.what());
        }
        return finish();
    }

private:
    // ---- configuration -------------------------------------------------

    void read_setup() {
        const std::string kind = reader_.text("kind", "");
        if (std::find(valid_kinds().begin(), valid_kinds().end(), kind) == valid_kinds().end()) {
            std::string list;
            for (const auto& k : valid_kinds()) list += (list.empty() ? "" : ", ") + k;
            throw ScenarioError("kind", "unknown scenario kind '" + kind + "'; valid kinds: " + list);
        }
        const KindDefaults d = defaults_for(kind);
        setup_.kind = kind;
        setup_.n_cells = reader_.integer("discretization.n_cells", d.n_cells);
        setup_.length = reader_.number("discretization.length", 1.0);
        setup_.tau = reader_.number("discretization.tau", d.tau);
        setup_.T = reader_.number("discretization.T", d.T);
        setup_.step.theta = reader_.number("discretization.theta", 1.0);
        setup_.step.lumped = reader_.flag("discretization.lumped", true);
        const std::string bc = reader_.text("discretization.bc", d.bc);
        if (setup_.n_cells < 1) throw ScenarioError("discretization.n_cells", "must be positive");
        if (!(setup_.length > 0.0)) throw ScenarioError("discretization.length", "must be positive");
        if (!(setup_.tau > 0.0)) throw ScenarioError("discretization.tau", "must be positive");
        if (!(setup_.T > 0.0)) throw ScenarioError("discretization.T", "must be positive");
        if (!(setup_.step.theta >= 0.0 && setup_.step.theta <= 1.0))
            throw ScenarioError("discretization.theta", "must lie in [0, 1]");
        try {
            setup_.bc = parse_boundary_kind(bc);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("discretization.bc", e.what());
        }
        try {
            setup_.grid = TimeGrid::with_step(setup_.T, setup_.tau);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("discretization.tau", e.what());
        }

        long long seed = reader_.integer("seed", 1);
        if (opts_.seed) {
            seed = static_cast<long long>(*opts_.seed);
            reader_.override_value("seed", seed);
        }
        setup_.seed = static_cast<std::uint64_t>(seed);
        setup_.tol = reader_.number("tol", 1e-10);
        if (opts_.tol) {
            setup_.tol = *opts_.tol;
            reader_.override_value("tol", setup_.tol);
        }
        if (!(setup_.tol >= 0.0)) throw ScenarioError("tol", "must be nonnegative");
        const long long nt = reader_.integer("sampling.t_samples", 10);
        const long long nv = reader_.integer("sampling.v_samples", 200);
        if (nt < 1) throw ScenarioError("sampling.t_samples", "must be >= 1");
        if (nv < 1) throw ScenarioError("sampling.v_samples", "must be >= 1");
        setup_.t_samples = static_cast<std::size_t>(nt);
        setup_.v_samples = static_cast<std::size_t>(nv);
        defaults_ = d;
    }

    FemSpace space(BoundaryKind bc) const {
        if (bc == BoundaryKind::dirichlet && setup_.n_cells < 2)
            throw ScenarioError("discretization.n_cells", "a dirichlet space needs at least 2 cells");
        return build_space(setup_.n_cells, setup_.length, bc);
    }

    Profile profile(const std::string& path, const json& fallback, double span) {
        return parse_profile(reader_.raw(path, fallback), span, path);
    }

    FormSpec form(const FemSpace& sp, const std::string& beta_prefix = "data") {
        const Profile ax = profile("data.diffusion", "one", setup_.length);
        const Profile at = profile("data.diffusion_t", "one", setup_.T);
        if (!(ax.lo > 0.0) || !(at.lo > 0.0))
            throw ScenarioError("data.diffusion", "diffusion must be strictly positive");
        FormSpec spec;
        spec.diffusion = [ax, at](double t, double x) { return ax.fn(x) * at.fn(t); };
        spec.ellipticity = std::min({ax.lo * at.lo, ax.lo * at.hi, ax.hi * at.lo});
        const Profile bl = profile(beta_prefix + ".beta_left", "zero", setup_.T);
        const Profile br = profile(beta_prefix + ".beta_right", "zero", setup_.T);
        spec.beta_left = bl.fn;
        spec.beta_right = br.fn;
        if (reader_.has("data.rank_one")) {
            const Profile phi = profile("data.rank_one.phi", "one", setup_.length);
            const Profile psi = profile("data.rank_one.psi", "one", setup_.length);
            const Profile w = profile("data.rank_one.weight", 1.0, setup_.T);
            spec.rank_one = RankOneTerm{interpolate(sp, phi.fn), interpolate(sp, psi.fn), w.fn};
        }
        return spec;
    }

    SourceSpec source(SourceSign required) {
        const Profile fx = profile("data.f", "zero", setup_.length);
        const Profile ft = profile("data.f_t", "one", setup_.T);
        SourceSpec s;
        if (fx.lo == 0.0 && fx.hi == 0.0) return s;
        s.f = [fx, ft](double t, double x) { return fx.fn(x) * ft.fn(t); };
        const double lo = std::min({fx.lo * ft.lo, fx.lo * ft.hi, fx.hi * ft.lo, fx.hi * ft.hi});
        const double hi = std::max({fx.lo * ft.lo, fx.lo * ft.hi, fx.hi * ft.lo, fx.hi * ft.hi});
        if (required == SourceSign::nonneg && lo < 0.0) throw ScenarioError("data.f", "this scenario needs f >= 0");
        if (required == SourceSign::nonpos && hi > 0.0) throw ScenarioError("data.f", "this scenario needs f <= 0");
        s.sign = lo >= 0.0 ? SourceSign::nonneg : (hi <= 0.0 ? SourceSign::nonpos : SourceSign::none);
        return s;
    }

    NodalVector initial(const FemSpace& sp) {
        return interpolate(sp, profile("data.u0", defaults_.u0, setup_.length).fn);
    }

    SampleOptions sampling() const {
        SampleOptions o;
        o.v_samples = setup_.v_samples;
        o.seed = setup_.seed;
        o.lumped = setup_.step.lumped;
        const std::size_t n = setup_.t_samples;
        for (std::size_t k = 0; k < n; ++k)
            o.t_samples.push_back(n == 1 ? setup_.T : setup_.T * static_cast<double>(k) / static_cast<double>(n - 1));
        return o;
    }

    std::filesystem::path output(const std::string& key, const std::string& fallback) {
        const std::string name = reader_.text("output." + key, fallback);
        const std::filesystem::path p = opts_.out_dir / name;
        const std::string canonical = p.lexically_normal().string();
        if (!used_outputs_.insert(canonical).second)
            throw ScenarioError("output." + key, "output path '" + canonical + "' collides with another output");
        return p;
    }

    // ---- execution helpers ---------------------------------------------

    void emit_csv(const std::filesystem::path& path, const Trajectory& traj) {
        pending_csv_.emplace_back(path, to_csv(traj));
    }

    void assertion(const std::string& name, bool ok) {
        report_["assertion." + name] = ok;
        pass_ = pass_ && ok;
    }

    void attach(const std::string& prefix, const json& sub) {
        const json flat = flatten(sub, prefix);
        for (auto it = flat.begin(); it != flat.end(); ++it) report_[it.key()] = it.value();
    }

    static double min_value(const Trajectory& t) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& s : t.states) m = std::min(m, s.size() ? s.minCoeff() : 0.0);
        return m;
    }
    static double max_value(const Trajectory& t) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto& s : t.states) m = std::max(m, s.size() ? s.maxCoeff() : 0.0);
        return m;
    }

    // ---- kinds -----------------------------------------------------------

    void run_positivity() {
        const FemSpace sp = space(setup_.bc);
        const FormSpec spec = form(sp);
        const SourceSpec f = source(SourceSign::nonneg);
        const NodalVector u0 = initial(sp);
        if (u0.minCoeff() < 0.0) throw ScenarioError("data.u0", "positivity needs u0 >= 0");
        const auto csv = output("csv", "trajectory.csv");
        const ConvexSet cone = ConvexSet::positive_cone(sp.mesh());
        attach("criterion", check_invariance_criterion(sp, spec, f, cone, sampling()).to_json());
        attach("hypothesis", check_form_sign_hypotheses(sp, spec, sampling(), SignHypothesis::positivity).to_json());
        if (setup_.step.lumped) {
            const MatrixSignReport m = matrix_sign_audit(assemble_operator(sp, spec, setup_.T, true));
            report_["matrix_sign.max_offdiag"] = m.max_offdiag;
            report_["matrix_sign.min_mass_diag"] = m.min_mass_diag;
            report_["matrix_sign.pass"] = m.pass;
        }
        const Trajectory traj = solve_cauchy(sp, spec, f, u0, setup_.grid, setup_.step);
        emit_csv(csv, traj);
        const InvarianceReport inv = verify_trajectory_membership(traj, cone);
        attach("membership", inv.to_json());
        report_["min_nodal_value"] = min_value(traj);
        assertion("nonnegative", min_value(traj) >= -setup_.tol);
        assertion("membership", inv.pass);
    }

    void run_submarkov() {
        const FemSpace sp = space(setup_.bc);
        const FormSpec spec = form(sp);
        const SourceSpec f = source(SourceSign::nonpos);
        const double level = reader_.number("data.level", 1.0);
        if (!(level > 0.0)) throw ScenarioError("data.level", "must be positive");
        const NodalVector u0 = initial(sp) * level;
        if (u0.maxCoeff() > level) throw ScenarioError("data.u0", "sub-Markov needs u0 <= 1 (scaled by level)");
        const auto csv = output("csv", "trajectory.csv");
        const ConvexSet cap = ConvexSet::cap(sp.mesh(), level);
        attach("criterion", check_invariance_criterion(sp, spec, f, cap, sampling()).to_json());
        attach("hypothesis", check_form_sign_hypotheses(sp, spec, sampling(), SignHypothesis::submarkov).to_json());
        const Trajectory traj = solve_cauchy(sp, spec, f, u0, setup_.grid, setup_.step);
        emit_csv(csv, traj);
        const InvarianceReport inv = verify_trajectory_membership(traj, cap);
        attach("membership", inv.to_json());
        report_["max_nodal_value"] = max_value(traj);
        assertion("below_level", max_value(traj) <= level + setup_.tol);
        assertion("membership", inv.pass);
    }

    /// Pair (u, v) with u <= v expected; C1 = positive quadrant, C2 = {u <= v}.
    void audit_pair(const FormBlock& lower, const FormBlock& upper, const Trajectory& tu, const Trajectory& tv) {
        const Mesh& mesh = lower.space.mesh();
        const std::vector<FormBlock> blocks = {lower, upper};
        const ConvexSet quadrant = ConvexSet::positive_cone(mesh, 2);
        const ConvexSet dom = ConvexSet::domination(mesh);
        attach("criterion", check_two_set_criterion(blocks, quadrant, dom, sampling()).to_json());
        const InvarianceReport inv = verify_pair_membership(tu, tv, dom);
        const InvarianceReport pos = verify_pair_membership(tu, tv, quadrant);
        attach("membership", inv.to_json());
        attach("positivity", pos.to_json());
    }

    void run_domination() {
        const FemSpace dir = space(BoundaryKind::dirichlet);
        const FemSpace neu = space(BoundaryKind::neumann);
        const FormSpec spec = form(neu);
        if (spec.rank_one) throw ScenarioError("data.rank_one", "not supported for domination_dirichlet_neumann");
        const SourceSpec f = source(SourceSign::nonneg);
        const NodalVector u0n = initial(neu);
        if (u0n.minCoeff() < 0.0) throw ScenarioError("data.u0", "domination needs u0 >= 0");
        const NodalVector u0d = dir.restrict_to_dofs(neu.extend(u0n));
        const auto csv_d = output("csv_dirichlet", "u_dirichlet.csv");
        const auto csv_n = output("csv_neumann", "u_neumann.csv");
        const Trajectory td = solve_cauchy(dir, spec, f, u0d, setup_.grid, setup_.step);
        const Trajectory tn = solve_cauchy(neu, spec, f, u0n, setup_.grid, setup_.step);
        emit_csv(csv_d, td);
        emit_csv(csv_n, tn);
        audit_pair({dir, spec, f}, {neu, spec, f}, td, tn);

        double worst_gap = -std::numeric_limits<double>::infinity();
        double min_dir = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < td.states.size(); ++k) {
            const NodalVector ud = dir.extend(td.states[k]);
            const NodalVector un = tn.states[k];
            for (std::size_t i = 1; i + 1 < neu.n_nodes(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                worst_gap = std::max(worst_gap, ud(ii) - un(ii));
                min_dir = std::min(min_dir, ud(ii));
            }
        }
        report_["max_dirichlet_minus_neumann"] = worst_gap;
        report_["min_dirichlet_value"] = min_dir;
        assertion("dirichlet_nonnegative", min_dir >= -setup_.tol);
        assertion("dirichlet_below_neumann", worst_gap <= setup_.tol);
    }

    void run_robin() {
        const FemSpace sp = space(setup_.bc);
        if (sp.bc() == BoundaryKind::dirichlet)
            throw ScenarioError("discretization.bc", "robin_monotonicity needs a robin or neumann space");
        const FormSpec b1 = form(sp, "data.beta1");
        const FormSpec b2 = [&] {
            FormSpec s = b1;
            s.beta_left = profile("data.beta2.beta_left", "one", setup_.T).fn;
            s.beta_right = profile("data.beta2.beta_right", "one", setup_.T).fn;
            return s;
        }();
        for (double t : setup_.grid.times()) {
            if (b1.beta_left(t) > b2.beta_left(t) || b1.beta_right(t) > b2.beta_right(t))
                throw ScenarioError("data.beta2", "need beta1 <= beta2 at every grid time");
            if (b1.beta_left(t) < 0.0 || b1.beta_right(t) < 0.0)
                throw ScenarioError("data.beta1", "need beta >= 0");
        }
        const SourceSpec f = source(SourceSign::nonneg);
        const NodalVector u0 = initial(sp);
        if (u0.minCoeff() < 0.0) throw ScenarioError("data.u0", "robin monotonicity needs u0 >= 0");
        const auto csv1 = output("csv_beta1", "u_beta1.csv");
        const auto csv2 = output("csv_beta2", "u_beta2.csv");
        const Trajectory t1 = solve_cauchy(sp, b1, f, u0, setup_.grid, setup_.step);
        const Trajectory t2 = solve_cauchy(sp, b2, f, u0, setup_.grid, setup_.step);
        emit_csv(csv1, t1);
        emit_csv(csv2, t2);
        audit_pair({sp, b2, f}, {sp, b1, f}, t2, t1);
        double worst_gap = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < t1.states.size(); ++k)
            worst_gap = std::max(worst_gap, (t2.states[k] - t1.states[k]).maxCoeff());
        report_["max_beta2_minus_beta1"] = worst_gap;
        assertion("beta2_below_beta1", worst_gap <= setup_.tol);
    }

    ConvexSet convex_from_config(const Mesh& mesh) {
        const std::string flavor = reader_.text("convex.flavor", "positive_cone");
        if (flavor == "positive_cone") return ConvexSet::positive_cone(mesh);
        if (flavor == "cap") return ConvexSet::cap(mesh, reader_.number("convex.level", 1.0));
        if (flavor == "order_interval") {
            const double lo = reader_.number("convex.lo", 0.0);
            const double hi = reader_.number("convex.hi", 1.0);
            if (!(lo <= hi)) throw ScenarioError("convex.hi", "need lo <= hi");
            return ConvexSet::order_interval(mesh, lo, hi);
        }
        throw ScenarioError("convex.flavor",
                            "unknown flavor '" + flavor + "' (expected positive_cone, cap or order_interval)");
    }

    void run_criterion_audit() {
        const FemSpace sp = space(setup_.bc);
        const FormSpec spec = form(sp);
        const SourceSpec f = source(SourceSign::none);
        const ConvexSet c = convex_from_config(sp.mesh());
        const std::string expect = reader_.text("expect", "pass");
        if (expect != "pass" && expect != "refute") throw ScenarioError("expect", "expected 'pass' or 'refute'");
        const NodalVector u0 = initial(sp);
        if (!c.contains(sp.extend(u0))) throw ScenarioError("data.u0", "initial datum must lie in the convex set");
        const auto csv = output("csv", "trajectory.csv");
        const CriterionReport crit = check_invariance_criterion(sp, spec, f, c, sampling());
        attach("criterion", crit.to_json());
        report_["criterion.verdict"] = crit.verdict();
        const Trajectory traj = solve_cauchy(sp, spec, f, u0, setup_.grid, setup_.step);
        emit_csv(csv, traj);
        const InvarianceReport inv = verify_trajectory_membership(traj, c);
        attach("membership", inv.to_json());
        if (expect == "pass") {
            assertion("criterion_pass", crit.pass);
            assertion("membership", inv.pass);
        } else {
            assertion("criterion_refuted", !crit.pass);
        }
    }

    void run_quasilinear() {
        const FemSpace sp = space(setup_.bc);
        const json m_value = reader_.raw("data.m", "inverse_square");
        QuasilinearSpec q;
        if (m_value.is_number()) {
            const double c = m_value.get<double>();
            if (!(c > 0.0)) throw ScenarioError("data.m", "constant m must be positive");
            q.m = [c](double, double, double) { return c; };
            q.eta = c;
            q.bound = c;
        } else if (m_value == "inverse_square") {
            q.m = [](double, double, double y) { return 1.0 + 1.0 / (1.0 + y * y); };
            q.eta = 1.0;
            q.bound = 2.0;
        } else {
            throw ScenarioError("data.m", "unknown m preset (expected inverse_square or a positive number)");
        }
        const SourceSpec f = source(SourceSign::none);
        const NodalVector u0 = initial(sp);
        QuasilinearOptions qo;
        qo.step = setup_.step;
        qo.max_iter = static_cast<std::size_t>(std::max<long long>(1, reader_.integer("quasilinear.max_iter", 50)));
        qo.tol = reader_.number("quasilinear.tol", 1e-8);
        qo.damping = reader_.number("quasilinear.damping", 1.0);
        if (!(qo.tol > 0.0)) throw ScenarioError("quasilinear.tol", "must be positive");
        if (!(qo.damping > 0.0 && qo.damping <= 1.0)) throw ScenarioError("quasilinear.damping", "must lie in (0, 1]");
        const auto csv = output("csv", "trajectory.csv");
        const auto sidecar = output("fixed_point", "fixed_point.json");
        const QuasilinearResult res = solve_quasilinear(sp, q, f, u0, setup_.grid, qo);
        emit_csv(csv, res.solution);
        pending_text_.emplace_back(sidecar, res.report.to_json().dump(2) + "\n");
        report_["fixed_point.iterations"] = res.report.iterations;
        report_["fixed_point.converged"] = res.report.converged;
        report_["fixed_point.final_residual"] =
            res.report.residual_history.empty() ? 0.0 : res.report.residual_history.back();
        report_["fixed_point.apriori_ratio"] = res.report.apriori_ratio;
        assertion("converged", res.report.converged);
        const bool nonneg_data = u0.minCoeff() >= 0.0 && (f.is_zero() || f.sign == SourceSign::nonneg);
        report_["min_nodal_value"] = min_value(res.solution);
        if (nonneg_data) assertion("nonnegative", min_value(res.solution) >= -setup_.tol);
    }

    void run_sobolev() {
        const FemSpace sp = space(setup_.bc);
        const FormSpec spec = form(sp);
        const SourceSpec f = source(SourceSign::none);
        const NodalVector u0 = initial(sp);
        const auto csv = output("csv", "trajectory.csv");
        const Trajectory traj = solve_cauchy(sp, spec, f, u0, setup_.grid, setup_.step);
        emit_csv(csv, traj);
        const SampledPath path = SampledPath::from_trajectory(traj);

        // defaults: a grid-aligned window over the middle 80% and the admissible shifts among 1, 2, 4
        const double tau = setup_.grid.tau(0);
        const auto n = static_cast<double>(setup_.grid.n_steps());
        const double c = reader_.number("sobolev.window_start", tau * std::max(2.0, std::round(0.1 * n)));
        const double d = reader_.number("sobolev.window_end", tau * std::min(n - 2.0, std::round(0.9 * n)));
        json default_shifts = json::array();
        for (long s : {1L, 2L, 4L})
            if (static_cast<double>(s) * tau < std::min(c, setup_.T - d)) default_shifts.push_back(s);
        const json shifts_json = reader_.raw("sobolev.shifts", default_shifts);
        std::vector<long> shifts;
        if (!shifts_json.is_array()) throw ScenarioError("sobolev.shifts", "expected an array of integers");
        for (const auto& s : shifts_json) {
            if (!s.is_number_integer()) throw ScenarioError("sobolev.shifts", "expected an array of integers");
            shifts.push_back(s.get<long>());
        }
        DifferenceQuotientReport dq;
        try {
            dq = difference_quotient_constant(path, c, d, shifts);
        } catch (const std::invalid_argument& e) {
            throw ScenarioError("sobolev", e.what());
        }
        attach("difference_quotient", dq.to_json());
        assertion("difference_quotient", dq.pass);

        const ConvexSet cone = ConvexSet::positive_cone(sp.mesh());
        const ConvexSet cap = ConvexSet::cap(sp.mesh(), 1.0);
        const auto positive = lipschitz_composition_check(path, [&](const NodalVector& x) { return cone.project(x); }, 1.0);
        const auto capped = lipschitz_composition_check(path, [&](const NodalVector& x) { return cap.project(x); }, 1.0);
        const auto doubled = lipschitz_composition_check(path, [](const NodalVector& x) { return NodalVector(2.0 * x); }, 2.0);
        attach("lipschitz.positive_part", positive.to_json());
        attach("lipschitz.cap", capped.to_json());
        attach("lipschitz.double", doubled.to_json());
        assertion("lipschitz_positive_part", positive.pass);
        assertion("lipschitz_cap", capped.pass);
        assertion("lipschitz_double", doubled.pass);
    }

    void runtime_failure(const std::string& what) {
        report_["error"] = what;
        pass_ = false;
    }

    ScenarioOutcome finish() {
        const auto report_path = output("report", "report.json");
        report_["kind"] = setup_.kind;
        report_["pass"] = pass_;
        attach("config", reader_.resolved());

        std::filesystem::create_directories(opts_.out_dir);
        ScenarioOutcome out;
        for (const auto& [path, text] : pending_csv_) write(path, text, out);
        for (const auto& [path, text] : pending_text_) write(path, text, out);
        write(report_path, report_.dump(2) + "\n", out);
        out.exit_code = pass_ ? 0 : 1;
        out.report = report_;
        return out;
    }

    static void write(const std::filesystem::path& path, const std::string& text, ScenarioOutcome& out) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream os(path, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + path.string());
        os << text;
        out.files.push_back(path);
    }

    ConfigReader reader_;
    RunOptions opts_;
    Setup setup_{};
    KindDefaults defaults_;
    json report_ = json::object();
    bool pass_ = true;
    std::set<std::string> used_outputs_;
    std::vector<std::pair<std::filesystem::path, std::string>> pending_csv_;
    std::vector<std::pair<std::filesystem::path, std::string>> pending_text_;
};

}  // namespace detail

/// Runs one scenario. Throws ScenarioError for invalid configurations; a run
/// whose assertions fail returns exit_code 1 with the report written.
inline ScenarioOutcome run_scenario(const json& config, const RunOptions& opts = {}) {
    try {
        return detail::Runner(config, opts).run();
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ScenarioError("config", e.what());
    }
}

}  // namespace forminv::scenario

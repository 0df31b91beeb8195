#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "forminv/convex.hpp"
#include "forminv/errors.hpp"
#include "forminv/evolution.hpp"
#include "forminv/forms.hpp"
#include "forminv/mesh_space.hpp"

namespace forminv {

/// Minimum of a sampled criterion functional. A failing report means a
/// negative witness was found; a passing one only means none was found.
struct CriterionReport {
    double min_value = std::numeric_limits<double>::infinity();
    double arg_t = 0.0;
    std::size_t arg_index = 0;
    std::size_t n_samples = 0;
    double tol = 0.0;
    bool pass = true;

    std::string verdict() const {
        return pass ? "supported at " + std::to_string(n_samples) + " samples" : "refuted";
    }

    nlohmann::json to_json() const {
        return {{"min_value", min_value}, {"arg_t", arg_t},  {"arg_index", arg_index},
                {"n_samples", n_samples}, {"tol", tol}, {"pass", pass}};
    }
};

/// One factor of a (product) evolution problem: space, form and source.
struct FormBlock {
    FemSpace space;
    FormSpec form;
    SourceSpec source;
};

struct SampleOptions {
    std::vector<double> t_samples;
    std::size_t v_samples = 200;
    std::uint64_t seed = 1;
    bool lumped = true;
};

namespace detail {

class BlockSampler {
public:
    explicit BlockSampler(std::span<const FormBlock> blocks) : blocks_(blocks) {
        if (blocks.empty()) throw std::invalid_argument("criterion: no form blocks");
        for (const auto& b : blocks)
            if (!(b.space.mesh() == blocks.front().space.mesh()))
                throw std::invalid_argument("criterion: product blocks must share one mesh");
    }

    const Mesh& mesh() const { return blocks_.front().space.mesh(); }
    std::size_t n_nodes() const { return mesh().n_nodes(); }

    /// Dof vectors of every block -> concatenated all-node H vector.
    NodalVector to_h(const std::vector<NodalVector>& dofs) const {
        NodalVector out(static_cast<Eigen::Index>(blocks_.size() * n_nodes()));
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            out.segment(static_cast<Eigen::Index>(b * n_nodes()), static_cast<Eigen::Index>(n_nodes())) =
                blocks_[b].space.extend(dofs[b]);
        return out;
    }

    std::vector<NodalVector> to_dofs(const NodalVector& h) const {
        std::vector<NodalVector> out;
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            const NodalVector seg =
                h.segment(static_cast<Eigen::Index>(b * n_nodes()), static_cast<Eigen::Index>(n_nodes()));
            if (blocks_[b].space.constrained_magnitude(seg) > 0.0)
                throw ContractViolation("projection maps V outside V (constrained node became nonzero)");
            out.push_back(blocks_[b].space.restrict_to_dofs(seg));
        }
        return out;
    }

    std::vector<NodalVector> normal_sample(std::mt19937_64& rng) const {
        std::normal_distribution<double> normal;
        std::vector<NodalVector> out;
        for (const auto& b : blocks_) {
            NodalVector v(static_cast<Eigen::Index>(b.space.n_dofs()));
            for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
            out.push_back(std::move(v));
        }
        return out;
    }

    std::span<const FormBlock> blocks() const { return blocks_; }

private:
    std::span<const FormBlock> blocks_;
};

inline void check_convex(const ConvexSet& c, const BlockSampler& s, const char* who) {
    if (c.blocks() != s.blocks().size() || !(c.mesh() == s.mesh()))
        throw std::invalid_argument(std::string(who) + ": convex set does not match the form blocks");
}

inline CriterionReport sampled_criterion(std::span<const FormBlock> blocks, const ConvexSet* restrict_to,
                                         const ConvexSet& c, const SampleOptions& opts) {
    if (opts.t_samples.empty() || opts.v_samples == 0)
        throw std::invalid_argument("criterion: empty sample sets");
    BlockSampler sampler(blocks);
    check_convex(c, sampler, "criterion");
    if (restrict_to) check_convex(*restrict_to, sampler, "criterion (restriction set)");

    std::mt19937_64 rng(opts.seed);
    CriterionReport report;
    double scale = 0.0;
    std::size_t index = 0;
    for (double t : opts.t_samples) {
        std::vector<AssembledOperator> ops;
        std::vector<NodalVector> loads;
        for (const auto& b : blocks) {
            ops.push_back(assemble_operator(b.space, b.form, t, opts.lumped));
            loads.push_back(load_vector(b.space, b.source, t));
        }
        for (std::size_t s = 0; s < opts.v_samples; ++s, ++index) {
            std::vector<NodalVector> v = sampler.normal_sample(rng);
            if (restrict_to) v = sampler.to_dofs(restrict_to->project(sampler.to_h(v)));
            const std::vector<NodalVector> pv = sampler.to_dofs(c.project(sampler.to_h(v)));
            double form_part = 0.0;
            double duality = 0.0;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                const NodalVector d = v[b] - pv[b];
                form_part += apply_form(ops[b], pv[b], d);
                duality += loads[b].dot(d);
            }
            scale = std::max(scale, std::abs(form_part));
            const double value = form_part - duality;
            if (value < report.min_value) {
                report.min_value = value;
                report.arg_t = t;
                report.arg_index = index;
            }
        }
    }
    report.n_samples = index;
    report.tol = 1e-10 * (1.0 + scale);
    report.pass = report.min_value >= -report.tol;
    return report;
}

}  // namespace detail

/// Samples a(t,Pv,v-Pv) - <f(t),v-Pv> over random v in V.
inline CriterionReport check_invariance_criterion(std::span<const FormBlock> blocks, const ConvexSet& c,
                                                  const SampleOptions& opts) {
    return detail::sampled_criterion(blocks, nullptr, c, opts);
}

inline CriterionReport check_invariance_criterion(const FemSpace& space, const FormSpec& spec, const SourceSpec& f,
                                                  const ConvexSet& c, const SampleOptions& opts) {
    const FormBlock block{space, spec, f};
    return check_invariance_criterion(std::span<const FormBlock>(&block, 1), c, opts);
}

/// Same functional with P = P2 and samples drawn inside C1 (random vector, then P1).
inline CriterionReport check_two_set_criterion(std::span<const FormBlock> blocks, const ConvexSet& c1,
                                               const ConvexSet& c2, const SampleOptions& opts) {
    return detail::sampled_criterion(blocks, &c1, c2, opts);
}

inline CriterionReport check_two_set_criterion(const FemSpace& space, const FormSpec& spec, const SourceSpec& f,
                                               const ConvexSet& c1, const ConvexSet& c2, const SampleOptions& opts) {
    const FormBlock block{space, spec, f};
    return check_two_set_criterion(std::span<const FormBlock>(&block, 1), c1, c2, opts);
}

enum class SignHypothesis { positivity, submarkov, domination };

/// Sampled form-sign hypotheses, oriented so that pass <=> min >= -tol:
///   positivity   -a(t, v+, v-)
///   submarkov     a(t, v^1, (v-1)+)
///   domination    a(t,u,w) - b(t,u,w) over nonnegative nondecreasing u, w
inline CriterionReport check_form_sign_hypotheses(const FemSpace& space, const FormSpec& spec,
                                                  const SampleOptions& opts, SignHypothesis which,
                                                  const FormSpec* spec_b = nullptr) {
    if (opts.t_samples.empty() || opts.v_samples == 0)
        throw std::invalid_argument("check_form_sign_hypotheses: empty sample sets");
    if (which == SignHypothesis::domination && spec_b == nullptr)
        throw std::invalid_argument("check_form_sign_hypotheses: domination needs a second form");
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> normal;
    const Eigen::Index n = static_cast<Eigen::Index>(space.n_dofs());
    auto gaussian = [&] {
        NodalVector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
        return v;
    };
    auto monotone = [&] {
        NodalVector v(n);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) v(i) = (acc += std::abs(normal(rng)));
        return v;
    };

    CriterionReport report;
    double scale = 0.0;
    std::size_t index = 0;
    for (double t : opts.t_samples) {
        const AssembledOperator a = assemble_operator(space, spec, t, opts.lumped);
        std::optional<AssembledOperator> b;
        if (spec_b) b = assemble_operator(space, *spec_b, t, opts.lumped);
        for (std::size_t s = 0; s < opts.v_samples; ++s, ++index) {
            double value = 0.0;
            switch (which) {
                case SignHypothesis::positivity: {
                    const NodalVector v = gaussian();
                    const NodalVector plus = v.cwiseMax(0.0);
                    const NodalVector minus = (-v).cwiseMax(0.0);
                    value = -apply_form(a, plus, minus);
                    break;
                }
                case SignHypothesis::submarkov: {
                    const auto [low, high] = sublattice_decomposition(gaussian(), 1.0);
                    value = apply_form(a, low, high);
                    break;
                }
                case SignHypothesis::domination: {
                    const NodalVector u = monotone();
                    const NodalVector w = monotone();
                    value = apply_form(a, u, w) - apply_form(*b, u, w);
                    break;
                }
            }
            scale = std::max(scale, std::abs(value));
            if (value < report.min_value) {
                report.min_value = value;
                report.arg_t = t;
                report.arg_index = index;
            }
        }
    }
    report.n_samples = index;
    report.tol = 1e-10 * (1.0 + scale);
    report.pass = report.min_value >= -report.tol;
    return report;
}

/// Discrete sufficient condition for cone preservation by implicit Euler:
/// off-diagonals of A(t) nonpositive and a positive lumped mass diagonal.
struct MatrixSignReport {
    double max_offdiag = -std::numeric_limits<double>::infinity();
    double min_mass_diag = std::numeric_limits<double>::infinity();
    bool pass = false;
};

inline MatrixSignReport matrix_sign_audit(const AssembledOperator& op) {
    if (!op.lumped)
        throw std::invalid_argument(
            "matrix_sign_audit: the sign condition is only sufficient with a lumped (diagonal) mass matrix");
    MatrixSignReport r;
    for (int k = 0; k < op.matrix.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(op.matrix, k); it; ++it)
            if (it.row() != it.col()) r.max_offdiag = std::max(r.max_offdiag, it.value());
    // no stored off-diagonal entries (a single dof): nothing positive
    if (!std::isfinite(r.max_offdiag)) r.max_offdiag = 0.0;
    for (Eigen::Index i = 0; i < op.mass.rows(); ++i) r.min_mass_diag = std::min(r.min_mass_diag, op.mass.coeff(i, i));
    r.pass = r.max_offdiag <= 1e-12 && r.min_mass_diag > 0.0;
    return r;
}

struct InvarianceReport {
    double worst_violation = 0.0;
    std::size_t step = 0;
    std::size_t node = 0;
    double tol = 0.0;
    bool pass = true;

    nlohmann::json to_json() const {
        return {{"worst_violation", worst_violation}, {"step", step}, {"node", node}, {"tol", tol}, {"pass", pass}};
    }
};

/// max_k ||U^k - P U^k||, where U^k stacks the states of all trajectories at
/// step k as one H (or H x H) vector. node indexes the stacked vector.
inline InvarianceReport verify_trajectory_membership(std::span<const Trajectory* const> trajs, const ConvexSet& c) {
    if (trajs.empty()) throw std::invalid_argument("verify_trajectory_membership: no trajectories");
    const std::size_t n_steps = trajs.front()->states.size();
    for (const Trajectory* t : trajs)
        if (t->states.size() != n_steps || !(t->space.mesh() == c.mesh()))
            throw std::invalid_argument("verify_trajectory_membership: trajectories do not match the convex set");
    if (c.blocks() != trajs.size())
        throw std::invalid_argument("verify_trajectory_membership: block count mismatch");

    const Eigen::Index nn = static_cast<Eigen::Index>(c.mesh().n_nodes());
    InvarianceReport report;
    double max_norm = 0.0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        NodalVector x(static_cast<Eigen::Index>(c.dimension()));
        for (std::size_t b = 0; b < trajs.size(); ++b)
            x.segment(static_cast<Eigen::Index>(b) * nn, nn) = trajs[b]->space.extend(trajs[b]->states[k]);
        max_norm = std::max(max_norm, c.norm(x));
        const NodalVector defect = x - c.project(x);
        const double dist = c.norm(defect);
        if (dist > report.worst_violation) {
            report.worst_violation = dist;
            report.step = k;
            Eigen::Index node = 0;
            defect.cwiseAbs().maxCoeff(&node);
            report.node = static_cast<std::size_t>(node);
        }
    }
    report.tol = 1e-10 * (1.0 + max_norm);
    report.pass = report.worst_violation <= report.tol;
    return report;
}

inline InvarianceReport verify_trajectory_membership(const Trajectory& traj, const ConvexSet& c) {
    const Trajectory* p = &traj;
    return verify_trajectory_membership(std::span<const Trajectory* const>(&p, 1), c);
}

inline InvarianceReport verify_pair_membership(const Trajectory& first, const Trajectory& second,
                                               const ConvexSet& c) {
    const Trajectory* p[2] = {&first, &second};
    return verify_trajectory_membership(std::span<const Trajectory* const>(p, 2), c);
}

}  // namespace forminv

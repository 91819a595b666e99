#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "spme/dirichlet_space.hpp"
#include "spme/monotone_graph.hpp"

namespace spme {

struct SolverOptions {
    /// Absolute residual target is rel_tol·(1 + |x|_2).
    double rel_tol = 1e-10;
    int max_newton = 200;
    int max_picard = 2000;
};

/// y + ε(ν − L)(Ψ_λ(y) + λy) = x.
struct ResolventProblem {
    const DirichletOperator* op = nullptr;
    std::shared_ptr<const MonotoneGraph> graph;
    double lambda = 0.1;
    double eps = 0.1;
    double nu = 0.1;
    State x;
    SolverOptions options;
};

struct ResolventResult {
    State y;             // J_ε(x)
    State w;             // (Ψ_λ + λI)(y)
    double residual = 0.0;  // |y + ε(ν − L)w − x|_2
    double tolerance = 0.0;
    int newton_iterations = 0;
    int picard_iterations = 0;
};

/// Solver for one (operator, graph, λ, ε, ν) configuration.
///
/// Works in w = (Ψ_λ + λI)(y), where the system
///   G(w) = h(w) + ε(ν − L)w − x,   h = (Ψ_λ + λI)^{-1},
/// is strongly monotone with SPD Newton matrices M·diag(h') + ε(νM + S).
/// Newton steps are line-searched on |G|_2; a majorized gradient step with
/// P = M/λ + ε(νM + S) takes over if the line search stalls.
class ResolventSolver {
public:
    ResolventSolver(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                    double lambda, double eps, double nu, SolverOptions options = {});

    ResolventResult solve(const State& x) const;
    /// A^{ν,ε}_λ(x) = (x − J_ε(x))/ε.
    State yosida_operator(const State& x) const;

    /// w ↦ h(w) pointwise, with h' in `slope` when non-null.
    State shift_inverse(const State& w, State* slope = nullptr) const;
    /// (Ψ_λ + λI)(y) pointwise.
    State forward(const State& y) const;

    const DirichletOperator& op() const noexcept { return op_; }
    double lambda() const noexcept { return lambda_; }
    double eps() const noexcept { return eps_; }
    double nu() const noexcept { return nu_; }

private:
    State residual(const State& w, const State& x, State* h, State* slope) const;

    const DirichletOperator& op_;
    std::shared_ptr<const MonotoneGraph> graph_;
    double lambda_;
    double eps_;
    double nu_;
    SolverOptions options_;
    std::unique_ptr<ShiftedSystem> newton_;
    std::unique_ptr<ShiftedSystem> majorizer_;
};

ResolventResult solve_resolvent(const ResolventProblem& p);
State apply_yosida_operator(const ResolventProblem& p);

struct Lemma41Report {
    double eps = 0.0, nu = 0.0, lambda = 0.0;
    int trials = 0;
    /// max of (lhs − rhs)/(1 + rhs) for each inequality; ≤ 0 means no violation.
    double nonexpansive = 0.0;           // ‖Jx − Jx̃‖_{F*ν} ≤ ‖x − x̃‖_{F*ν}
    double l2_lipschitz = 0.0;           // |Jx − Jx̃|_2 ≤ (νελ)^{-1/2}|x − x̃|_2
    std::map<double, double> lp;         // |Jx|_p ≤ |x|_p
    double observed_l2_constant = 0.0;   // max |Jx − Jx̃|_2 / |x − x̃|_2
    double l2_bound = 0.0;               // (νελ)^{-1/2}
    double worst() const;
    bool passed(double slack) const { return worst() <= slack; }
};

/// Random pairs: x = s·g with s log-uniform in [0.1, 10] and g standard
/// normal; x̃ is independent for even trials and x + 0.1·s·g' for odd ones.
Lemma41Report certify_lemma41(const DirichletOperator& op,
                              std::shared_ptr<const MonotoneGraph> graph, double eps, double nu,
                              double lambda, int trials, const std::vector<double>& p_list,
                              std::uint64_t seed, SolverOptions options = {});

}  // namespace spme

#include "spme/resolvent_solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spme/errors.hpp"

namespace spme {

ResolventSolver::ResolventSolver(const DirichletOperator& op,
                                 std::shared_ptr<const MonotoneGraph> graph, double lambda,
                                 double eps, double nu, SolverOptions options)
    : op_(op), graph_(std::move(graph)), lambda_(lambda), eps_(eps), nu_(nu),
      options_(options) {
    if (!graph_) throw InvalidParameters("resolvent solver needs a graph");
    if (!(lambda_ > 0.0) || !std::isfinite(lambda_))
        throw InvalidParameters("lambda must be positive");
    if (!(eps_ > 0.0) || !std::isfinite(eps_)) throw InvalidParameters("eps must be positive");
    if (!(nu_ >= 0.0) || !std::isfinite(nu_)) throw InvalidParameters("nu must be >= 0");
    if (nu_ == 0.0 && !op_.transient())
        throw NotTransient("nu = 0 requires a strictly negative definite operator");
    if (!(options_.rel_tol > 0.0) || options_.max_newton < 0 || options_.max_picard < 0)
        throw InvalidParameters("invalid solver options");
    newton_ = std::make_unique<ShiftedSystem>(op_.energy_matrix(), op_.is_dense());
    majorizer_ = std::make_unique<ShiftedSystem>(op_.energy_matrix(), op_.is_dense());
}

State ResolventSolver::shift_inverse(const State& w, State* slope) const {
    State h(w.size());
    if (slope) slope->resize(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const ShiftInverse s = graph_->yosida_shift_inverse(lambda_, w[i]);
        h[i] = s.y;
        if (slope) (*slope)[i] = s.slope;
    }
    return h;
}

State ResolventSolver::forward(const State& y) const {
    State w(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
        w[i] = graph_->yosida(lambda_, y[i]) + lambda_ * y[i];
    return w;
}

State ResolventSolver::residual(const State& w, const State& x, State* h, State* slope) const {
    State hw = shift_inverse(w, slope);
    State g = hw + eps_ * (nu_ * w - op_.apply(w)) - x;
    if (h) *h = std::move(hw);
    return g;
}

ResolventResult ResolventSolver::solve(const State& x) const {
    op_.space().check(x);
    const MeasureSpace& space = op_.space();
    const State& mu = space.weights();
    ResolventResult out;
    out.tolerance = options_.rel_tol * (1.0 + space.norm2(x));

    State w = forward(x);
    State h, slope;
    State g = residual(w, x, &h, &slope);
    double gnorm = space.norm2(g);
    double best = gnorm;

    bool stalled = false;
    while (gnorm > out.tolerance && out.newton_iterations < options_.max_newton) {
        ++out.newton_iterations;
        if (!newton_->factorize(mu.cwiseProduct(slope) + eps_ * nu_ * mu, eps_)) {
            stalled = true;
            break;
        }
        const State delta = newton_->solve(-mu.cwiseProduct(g));
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 40; ++k) {
            State wt = w + t * delta;
            State ht, st;
            State gt = residual(wt, x, &ht, &st);
            const double nt = space.norm2(gt);
            if (nt <= (1.0 - 1e-4 * t) * gnorm) {
                w = std::move(wt);
                h = std::move(ht);
                slope = std::move(st);
                g = std::move(gt);
                gnorm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        best = std::min(best, gnorm);
        if (!accepted) {
            stalled = true;
            break;
        }
    }

    if (gnorm > out.tolerance && (stalled || options_.max_picard > 0)) {
        // Majorized gradient steps: h is (1/λ)-Lipschitz, so P dominates every
        // generalized Jacobian and w ← w − P^{-1}Mg decreases the potential.
        if (!majorizer_->factorize((1.0 / lambda_ + eps_ * nu_) * mu, eps_))
            throw NoConvergence(out.newton_iterations, best);
        while (gnorm > out.tolerance && out.picard_iterations < options_.max_picard) {
            ++out.picard_iterations;
            w -= majorizer_->solve(mu.cwiseProduct(g));
            g = residual(w, x, &h, nullptr);
            gnorm = space.norm2(g);
            best = std::min(best, gnorm);
        }
    }

    if (gnorm > out.tolerance)
        throw NoConvergence(out.newton_iterations + out.picard_iterations, best);
    out.y = std::move(h);
    out.w = std::move(w);
    out.residual = gnorm;
    return out;
}

State ResolventSolver::yosida_operator(const State& x) const {
    const ResolventResult r = solve(x);
    return (x - r.y) / eps_;
}

ResolventResult solve_resolvent(const ResolventProblem& p) {
    if (!p.op) throw InvalidParameters("resolvent problem needs an operator");
    ResolventSolver solver(*p.op, p.graph, p.lambda, p.eps, p.nu, p.options);
    return solver.solve(p.x);
}

State apply_yosida_operator(const ResolventProblem& p) {
    if (!p.op) throw InvalidParameters("resolvent problem needs an operator");
    ResolventSolver solver(*p.op, p.graph, p.lambda, p.eps, p.nu, p.options);
    return solver.yosida_operator(p.x);
}

double Lemma41Report::worst() const {
    double w = std::max(nonexpansive, l2_lipschitz);
    for (const auto& [p, v] : lp) w = std::max(w, v);
    return w;
}

Lemma41Report certify_lemma41(const DirichletOperator& op,
                              std::shared_ptr<const MonotoneGraph> graph, double eps, double nu,
                              double lambda, int trials, const std::vector<double>& p_list,
                              std::uint64_t seed, SolverOptions options) {
    if (trials < 1) throw InvalidParameters("certify_lemma41 needs trials >= 1");
    if (!(nu > 0.0)) throw InvalidParameters("the L2 Lipschitz bound needs nu > 0");
    ResolventSolver solver(op, std::move(graph), lambda, eps, nu, options);
    const MeasureSpace& space = op.space();
    const auto n = static_cast<Eigen::Index>(op.size());

    Lemma41Report rep;
    rep.eps = eps;
    rep.nu = nu;
    rep.lambda = lambda;
    rep.trials = trials;
    rep.l2_bound = 1.0 / std::sqrt(nu * eps * lambda);
    rep.nonexpansive = -std::numeric_limits<double>::infinity();
    rep.l2_lipschitz = -std::numeric_limits<double>::infinity();
    for (double p : p_list) rep.lp[p] = -std::numeric_limits<double>::infinity();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> logscale(std::log(0.1), std::log(10.0));
    auto gaussian = [&]() {
        State g(n);
        for (Eigen::Index i = 0; i < n; ++i) g[i] = normal(rng);
        return g;
    };
    auto bump = [](double& slot, double lhs, double rhs) {
        slot = std::max(slot, (lhs - rhs) / (1.0 + rhs));
    };

    for (int t = 0; t < trials; ++t) {
        const double s = std::exp(logscale(rng));
        const State x = s * gaussian();
        const State xt = (t % 2 == 0) ? State(std::exp(logscale(rng)) * gaussian())
                                      : State(x + 0.1 * s * gaussian());
        const State y = solver.solve(x).y;
        const State yt = solver.solve(xt).y;

        bump(rep.nonexpansive, op.dual_norm(y - yt, nu), op.dual_norm(x - xt, nu));
        const double dy = space.norm2(y - yt);
        const double dx = space.norm2(x - xt);
        bump(rep.l2_lipschitz, dy, rep.l2_bound * dx);
        if (dx > 0.0) rep.observed_l2_constant = std::max(rep.observed_l2_constant, dy / dx);
        for (double p : p_list) {
            bump(rep.lp[p], std::pow(space.lp_pow(y, p), 1.0 / p),
                 std::pow(space.lp_pow(x, p), 1.0 / p));
            bump(rep.lp[p], std::pow(space.lp_pow(yt, p), 1.0 / p),
                 std::pow(space.lp_pow(xt, p), 1.0 / p));
        }
    }
    return rep;
}

}  // namespace spme

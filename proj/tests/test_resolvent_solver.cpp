#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "spme/dirichlet_space.hpp"
#include "spme/errors.hpp"
#include "spme/monotone_graph.hpp"
#include "spme/resolvent_solver.hpp"

using namespace spme;

namespace {

DirichletOperator minus_identity(int n) {
    SparseMatrix J(n, n);
    return build_jump_kernel(MeasureSpace(State::Ones(n)), J, State::Ones(n));
}

State random_state(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    State u(n);
    for (auto& v : u) v = N(rng);
    return u;
}

/// Coordinate descent on Φ(w) = Σμ_i H(w_i) + (ε/2)⟨(ν − L)w, w⟩_μ − ⟨x, w⟩_μ with H' = h;
/// each coordinate equation is solved by bisection.
State coordinate_descent(const DirichletOperator& op, const MonotoneGraph& g, double lambda,
                         double eps, double nu, const State& x) {
    const Eigen::MatrixXd L = op.generator();
    const Eigen::Index n = x.size();
    State w = State::Zero(n);
    auto h = [&](double v) { return g.yosida_shift_inverse(lambda, v).y; };
    for (int sweep = 0; sweep < 20000; ++sweep) {
        double moved = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            double off = 0.0;
            for (Eigen::Index j = 0; j < n; ++j)
                if (j != i) off -= L(i, j) * w(j);
            const double diag = nu - L(i, i);
            auto F = [&](double v) { return h(v) + eps * (diag * v + off) - x(i); };
            double lo = -1.0, hi = 1.0;
            while (F(lo) > 0) lo *= 2;
            while (F(hi) < 0) hi *= 2;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (F(mid) < 0 ? lo : hi) = mid;
            }
            const double v = 0.5 * (lo + hi);
            moved = std::max(moved, std::abs(v - w(i)));
            w(i) = v;
        }
        if (moved < 1e-14) break;
    }
    State y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = h(w(i));
    return y;
}

}  // namespace

TEST_SUITE("resolvent_solver") {
    TEST_CASE("linear graph with L = -I has a closed form") {
        const auto op = minus_identity(3);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::linear(1.0));
        State x(3);
        x << 1.0, -4.0, 2.5;
        const ResolventProblem p{&op, g, 1.0, 1.0, 1.0, x, {}};
        // Ψ_1(y) = y/2, so y + 1·2·(y/2 + y) = 4y = x.
        const ResolventResult r = solve_resolvent(p);
        CHECK((r.y - x / 4.0).norm() <= 1e-12);
        CHECK((apply_yosida_operator(p) - 0.75 * x).norm() <= 1e-12);
        CHECK(r.residual <= r.tolerance);
    }

    TEST_CASE("zero input gives zero") {
        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const ResolventSolver s(op, g, 0.1, 0.5, 0.2);
        const ResolventResult r = s.solve(State::Zero(8));
        CHECK(r.y.norm() == 0.0);
        CHECK(s.yosida_operator(State::Zero(8)).norm() == 0.0);
    }

    TEST_CASE("sign graph on a two-point chain matches coordinate descent") {
        const auto op = build_grid_dirichlet(1, {2}, 1.0);
        const MonotoneGraph sign = MonotoneGraph::sign();
        auto g = std::make_shared<const MonotoneGraph>(sign);
        std::mt19937_64 rng(9);
        for (double lambda : {1.0, 0.1, 0.01}) {
            const ResolventSolver s(op, g, lambda, 0.3, 0.5);
            for (int t = 0; t < 30; ++t) {
                const State x = random_state(rng, 2, 3.0);
                const ResolventResult r = s.solve(x);
                CHECK(r.residual <= r.tolerance);
                const State oracle = coordinate_descent(op, sign, lambda, 0.3, 0.5, x);
                CHECK((r.y - oracle).cwiseAbs().maxCoeff() <= 1e-8);
            }
        }
    }

    TEST_CASE("returned pair is consistent") {
        const auto op = build_sierpinski(2, 0.2, 0.5);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::example_discontinuous(2.0));
        const double eps = 0.05, nu = 0.1;
        const ResolventSolver s(op, g, 0.01, eps, nu);
        std::mt19937_64 rng(10);
        for (int t = 0; t < 30; ++t) {
            const State x = random_state(rng, op.size(), 2.0);
            const ResolventResult r = s.solve(x);
            CHECK((s.forward(r.y) - r.w).norm() <= 1e-9 * (1 + r.w.norm()));
            const State A = s.yosida_operator(x);
            const State image = nu * r.w - op.apply(r.w);
            CHECK(op.space().norm2(A - image) <= r.tolerance / eps * 1.0001 + 1e-12);
        }
    }

    TEST_CASE("sign graph on a grid has no resolvent estimate violations") {
        const auto op = build_grid_dirichlet(1, {16}, 1.0 / 17.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        for (double v : {0.1, 0.01}) {
            const Lemma41Report rep = certify_lemma41(op, g, v, v, v, 100, {2.0, 4.0, 6.0}, 3);
            CHECK(rep.passed(1e-8));
            CHECK(rep.observed_l2_constant <= rep.l2_bound);
        }
    }

    TEST_CASE("identical inputs give identical outputs") {
        const auto op = build_grid_dirichlet(1, {16}, 1.0 / 17.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::fast_diffusion(0.5));
        const ResolventSolver s(op, g, 0.05, 0.1, 0.1);
        std::mt19937_64 rng(11);
        const State x = random_state(rng, 16);
        CHECK(s.solve(x).y == s.solve(x).y);
    }

    TEST_CASE("invalid parameters") {
        const auto op = build_grid_dirichlet(1, {4}, 0.2);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        CHECK_THROWS_AS(ResolventSolver(op, g, 0.0, 0.1, 0.1), InvalidParameters);
        CHECK_THROWS_AS(ResolventSolver(op, g, 0.1, -1.0, 0.1), InvalidParameters);
        const ResolventSolver s(op, g, 0.1, 0.1, 0.1);
        CHECK_THROWS_AS(s.solve(State::Zero(3)), DimensionMismatch);
    }
}

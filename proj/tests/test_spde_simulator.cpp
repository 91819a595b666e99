#include <doctest.h>

#include <cmath>
#include <memory>

#include "spme/dirichlet_space.hpp"
#include "spme/errors.hpp"
#include "spme/monotone_graph.hpp"
#include "spme/noise_model.hpp"
#include "spme/spde_simulator.hpp"

using namespace spme;

namespace {

DirichletOperator minus_identity(int n) {
    SparseMatrix J(n, n);
    return build_jump_kernel(MeasureSpace(State::Ones(n)), J, State::Ones(n));
}

State sine_state(std::size_t n) {
    State x(n);
    for (std::size_t i = 0; i < n; ++i) x(i) = std::sin(M_PI * (i + 1.0) / (n + 1.0));
    return x;
}

}  // namespace

TEST_SUITE("spde_simulator") {
    TEST_CASE("implicit levels follow the scalar linear recurrence") {
        const auto op = minus_identity(3);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::linear(1.0));
        const DiagonalNoise none = DiagonalNoise::none(op.space());
        SimConfig cfg;
        cfg.T = 1.0;
        cfg.steps = 10;
        cfg.lambda = 0.5;
        cfg.nu = 0.25;
        cfg.initial = State::Constant(3, 2.0);
        for (Level level : {Level::nu_level, Level::lambda_level}) {
            cfg.level = level;
            const double nu = cfg.effective_nu();
            const double c = 1.0 / (1.0 + cfg.lambda) + cfg.lambda;
            const double factor = 1.0 / (1.0 + cfg.dt() * (nu + 1.0) * c);
            const Simulator sim(op, g, none, cfg);
            const Trajectory tr = sim.run(1, 0, true);
            REQUIRE(tr.records.size() == 11);
            for (int k = 0; k <= 10; ++k) {
                const double expect = 2.0 * std::pow(factor, k);
                CHECK(tr.states[k](0) == doctest::Approx(expect).epsilon(1e-10));
                CHECK(tr.records[k].l2_sq == doctest::Approx(3 * expect * expect).epsilon(1e-10));
                CHECK(tr.records[k].time == doctest::Approx(0.1 * k));
            }
        }
    }

    TEST_CASE("explicit level follows the scalar Yosida recurrence") {
        const auto op = minus_identity(2);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::linear(1.0));
        const DiagonalNoise none = DiagonalNoise::none(op.space());
        SimConfig cfg;
        cfg.T = 0.1;
        cfg.steps = 8;
        cfg.level = Level::eps_level;
        cfg.lambda = 0.5;
        cfg.nu = 0.25;
        cfg.eps = 0.1;
        cfg.initial = State::Constant(2, 1.0);
        const double c = 1.0 / (1.0 + cfg.lambda) + cfg.lambda;
        const double J = 1.0 / (1.0 + cfg.eps * (cfg.nu + 1.0) * c);
        const double factor = 1.0 - cfg.dt() * (1.0 - J) / cfg.eps;
        const Trajectory tr = Simulator(op, g, none, cfg).run(1, 0, true);
        for (int k = 0; k <= 8; ++k)
            CHECK(tr.states[k](1) == doctest::Approx(std::pow(factor, k)).epsilon(1e-10));
    }

    TEST_CASE("zero is a fixed point even with noise") {
        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
        SimConfig cfg;
        cfg.initial = State::Zero(8);
        cfg.steps = 20;
        for (Level level : {Level::eps_level, Level::nu_level, Level::lambda_level}) {
            cfg.level = level;
            cfg.eps = 0.5;
            const auto ens = simulate(op, g, noise, cfg, 3, 7);
            for (const auto& tr : ens)
                for (const auto& r : tr.records) CHECK(r.l2_sq == 0.0);
        }
    }

    TEST_CASE("empty ensemble and determinism") {
        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::example_discontinuous(2.0));
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
        SimConfig cfg;
        cfg.initial = sine_state(8);
        cfg.steps = 16;
        CHECK(simulate(op, g, noise, cfg, 0, 1).empty());
        const auto a = simulate(op, g, noise, cfg, 4, 99);
        const auto b = simulate(op, g, noise, cfg, 4, 99);
        const auto c = simulate(op, g, noise, cfg, 4, 100);
        CHECK(trajectories_csv(a) == trajectories_csv(b));
        CHECK(trajectories_csv(a) != trajectories_csv(c));
        // Trajectory k only depends on its own stream.
        const auto single = Simulator(op, g, noise, cfg).run(99, 2);
        CHECK(single.records.back().l2_sq == a[2].records.back().l2_sq);
    }

    TEST_CASE("records are consistent with the state") {
        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0});
        SimConfig cfg;
        cfg.initial = sine_state(8);
        cfg.steps = 4;
        cfg.m = 2.0;
        const Trajectory tr = Simulator(op, g, noise, cfg).run(3, 0, true);
        for (std::size_t k = 0; k < tr.records.size(); ++k) {
            const State& x = tr.states[k];
            CHECK(tr.records[k].l2_sq == doctest::Approx(op.space().lp_pow(x, 2.0)));
            CHECK(tr.records[k].l2m_pow == doctest::Approx(op.space().lp_pow(x, 4.0)));
            CHECK(tr.records[k].dual_nu0 == doctest::Approx(op.dual_norm(x, cfg.nu0)));
            CHECK(tr.records[k].dual_e == doctest::Approx(op.dual_norm(x, 0.0)));
        }
    }

    TEST_CASE("explicit step refuses unstable time steps") {
        const auto op = build_grid_dirichlet(1, {4}, 0.2);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise none = DiagonalNoise::none(op.space());
        SimConfig cfg;
        cfg.level = Level::eps_level;
        cfg.eps = 1e-3;
        cfg.T = 1.0;
        cfg.steps = 10;
        cfg.initial = State::Ones(4);
        CHECK_THROWS_AS(Simulator(op, g, none, cfg), StabilityViolation);
    }

    TEST_CASE("lambda level needs a transient operator") {
        SparseMatrix J(2, 2);
        J.insert(0, 1) = 1.0;
        J.insert(1, 0) = 1.0;
        const auto op = build_jump_kernel(MeasureSpace(State::Ones(2)), J, State::Zero(2), true);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise none = DiagonalNoise::none(op.space());
        SimConfig cfg;
        cfg.level = Level::lambda_level;
        cfg.initial = State::Ones(2);
        CHECK_THROWS_AS(Simulator(op, g, none, cfg), NotTransient);
    }

    TEST_CASE("sign graph dissipates without noise") {
        const auto op = build_grid_dirichlet(1, {16}, 1.0 / 17.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        SimConfig cfg;
        cfg.T = 0.5;
        cfg.steps = 50;
        cfg.initial = 3.0 * sine_state(16);
        for (Level level : {Level::nu_level, Level::lambda_level}) {
            cfg.level = level;
            const DissipationReport rep = deterministic_dissipation(op, g, cfg);
            CHECK(rep.passed());
            CHECK(rep.norms.back() < rep.norms.front());
            CHECK(rep.ledger_max <= 1e-10);
        }
        cfg.initial = State::Zero(16);
        const DissipationReport zero = deterministic_dissipation(op, g, cfg);
        for (double v : zero.norms) CHECK(v == 0.0);
    }

    TEST_CASE("coupled differences") {
        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
        SimConfig a;
        a.level = Level::lambda_level;
        a.initial = sine_state(8);
        a.steps = 16;
        a.T = 0.1;
        const DifferenceEstimate same = coupled_difference(op, g, noise, a, a, 5, 1, DiffNorm::extended);
        CHECK(same.sup_sq.mean == 0.0);
        SimConfig b = a;
        b.lambda = a.lambda / 2;
        const DifferenceEstimate d = coupled_difference(op, g, noise, a, b, 5, 1, DiffNorm::extended);
        CHECK(d.sup_sq.mean > 0.0);
        b.steps = 17;
        CHECK_THROWS_AS(coupled_difference(op, g, noise, a, b, 5, 1, DiffNorm::extended),
                        ConfigMismatch);
    }

    TEST_CASE("moment estimates") {
        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0});
        SimConfig cfg;
        cfg.initial = sine_state(8);
        cfg.steps = 8;
        const auto ens = simulate(op, g, noise, cfg, 6, 2);
        const MomentSeries ms = estimate_moments(ens, MomentKind::l2);
        REQUIRE(ms.mean.size() == 9);
        double sum = 0.0;
        for (const auto& tr : ens) sum += tr.records[3].l2_sq;
        CHECK(ms.mean[3] == doctest::Approx(sum / 6));
        CHECK(ms.se[0] == 0.0);
        CHECK(ms.sup_mean() >= ms.mean[8]);
        const ScalarEstimate ti = time_integral(ens, cfg.dt(), &StepRecord::l2_sq);
        CHECK(ti.samples == 6);
        CHECK(ti.mean > 0.0);
    }

    TEST_CASE("trajectory CSV layout") {
        const auto op = build_grid_dirichlet(1, {4}, 0.2);
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0});
        SimConfig cfg;
        cfg.initial = sine_state(4);
        cfg.steps = 1;
        const std::string csv = trajectories_csv(simulate(op, g, noise, cfg, 1, 1));
        int lines = 0;
        for (char ch : csv) lines += ch == '\n';
        CHECK(lines == 3);
        CHECK(csv.find("\r\n") != std::string::npos);
    }
}

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "spme/dirichlet_space.hpp"
#include "spme/errors.hpp"
#include "spme/noise_model.hpp"
#include "spme/statistics.hpp"

using namespace spme;

namespace {

State random_state(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> N;
    State u(n);
    for (auto& v : u) v = N(rng);
    return u;
}

}  // namespace

TEST_SUITE("noise_model") {
    TEST_CASE("apply matches the dense assembly") {
        const auto op = build_grid_dirichlet(1, {12}, 1.0 / 13.0);
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
        std::mt19937_64 rng(1);
        for (int t = 0; t < 20; ++t) {
            const State x = random_state(rng, 12);
            const State dW = random_state(rng, 2);
            State oracle = State::Zero(12);
            for (std::size_t k = 0; k < 2; ++k)
                oracle += noise.coeffs()[k] * dW(k) * x.cwiseProduct(noise.modes()[k]);
            CHECK((noise.apply(x, dW) - oracle).norm() <= 1e-13 * (1 + oracle.norm()));
            // Dense operator acting on h = Σ dW_k e_k reproduces the same vector.
            State h = State::Zero(12);
            for (std::size_t k = 0; k < 2; ++k) h += dW(k) * noise.modes()[k];
            const State viaDense = noise.dense_operator(x) * h;
            CHECK((viaDense - oracle).norm() <= 1e-12 * (1 + oracle.norm()));
        }
        CHECK(noise.apply(State::Zero(12), State::Ones(2)).norm() == 0.0);
    }

    TEST_CASE("modes are orthonormal in L2(mu)") {
        const auto op = build_sierpinski(2, 0.2, 0.5);
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5, 0.25});
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(op.space().inner(noise.modes()[i], noise.modes()[j]) ==
                      doctest::Approx(i == j ? 1.0 : 0.0));
        const DiagonalNoise c = DiagonalNoise::constant(op.space(), 0.3);
        CHECK(op.space().norm2(c.modes()[0]) == doctest::Approx(1.0));
    }

    TEST_CASE("Hilbert-Schmidt norms against direct summation") {
        const auto op = build_grid_dirichlet(1, {10}, 0.1);
        const DiagonalNoise noise =
            DiagonalNoise::indicators(op.space(), {{0, 1, 2}, {5, 6}}, {0.7, 0.2});
        std::mt19937_64 rng(2);
        const State x = random_state(rng, 10);
        double hs = 0.0;
        State pointwise = State::Zero(10);
        for (std::size_t k = 0; k < 2; ++k) {
            const State bek = noise.coeffs()[k] * x.cwiseProduct(noise.modes()[k]);
            hs += op.space().inner(bek, bek);
            pointwise += bek.cwiseAbs2();
        }
        CHECK(noise.hs_norm_l2(x) == doctest::Approx(std::sqrt(hs)));
        CHECK(noise.hs_moment_2m(x, 1.0) == doctest::Approx(hs));
        const double m = 2.5;
        double mom = 0.0;
        for (int i = 0; i < 10; ++i) mom += op.space().weights()(i) * std::pow(pointwise(i), m);
        CHECK(noise.hs_moment_2m(x, m) == doctest::Approx(mom));
        CHECK(noise.hs_norm_l2(State::Zero(10)) == 0.0);
        CHECK(noise.hs_moment_2m(x, m) <=
              noise.C4(m) * op.space().lp_pow(x, 2 * m) * (1 + 1e-12));
    }

    TEST_CASE("dual Hilbert-Schmidt norm") {
        SparseMatrix J(4, 4);
        const auto I = build_jump_kernel(MeasureSpace(State::Ones(4)), J, State::Ones(4));
        const DiagonalNoise noise = DiagonalNoise::indicators(I.space(), {{0}, {1, 2}}, {1.0, 0.5});
        std::mt19937_64 rng(3);
        const State x = random_state(rng, 4);
        for (double nu : {0.0, 0.3, 2.0})
            CHECK(noise.hs_norm_dual(I, x, nu) ==
                  doctest::Approx(noise.hs_norm_l2(x) / std::sqrt(1.0 + nu)));

        const auto op = build_grid_dirichlet(1, {8}, 1.0 / 9.0);
        const DiagonalNoise en = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
        const State y = random_state(rng, 8);
        double sq = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            const State bek = en.coeffs()[k] * y.cwiseProduct(en.modes()[k]);
            sq += op.space().inner(bek, op.resolve(bek, 0.2));
        }
        CHECK(en.hs_norm_dual(op, y, 0.2) == doctest::Approx(std::sqrt(sq)));
    }

    TEST_CASE("structural constants bound sampled states") {
        const auto op = build_grid_dirichlet(1, {16}, 1.0 / 17.0);
        const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
        const std::vector<double> grid{1.0, 1e-2, 1e-4};
        const double C2 = noise.C2(op, grid);
        const double C3 = noise.C3();
        double c3sq = 0.0;
        for (std::size_t k = 0; k < 2; ++k)
            c3sq += std::pow(noise.coeffs()[k] * noise.modes()[k].cwiseAbs().maxCoeff(), 2);
        CHECK(C3 == doctest::Approx(std::sqrt(c3sq)));
        std::mt19937_64 rng(4);
        for (int t = 0; t < 100; ++t) {
            const State x = random_state(rng, 16);
            CHECK(noise.hs_norm_l2(x) <= C3 * op.space().norm2(x) * (1 + 1e-12));
            for (double nu : grid)
                CHECK(noise.hs_norm_dual(op, x, nu) <= C2 * op.dual_norm(x, nu) * (1 + 1e-10));
        }
        CHECK(std::isfinite(noise.summability(op, grid)));
    }

    TEST_CASE("increment stream determinism and moments") {
        IncrementStream a(42, 7, 3), b(42, 7, 3), c(42, 8, 3);
        const State x = a.next(0.1);
        CHECK(x == b.next(0.1));
        CHECK(x != c.next(0.1));
        CHECK(a.next(0.0).norm() == 0.0);
        IncrementStream s(5, 0, 1);
        std::vector<double> first, second;
        const double dt = 0.01;
        for (int i = 0; i < 100000; ++i) {
            const double v = s.next(dt)(0);
            first.push_back(v);
            second.push_back(v * v);
        }
        const MeanSe m1 = mean_se(first), m2 = mean_se(second);
        CHECK(std::abs(m1.mean) <= 3 * m1.se);
        CHECK(std::abs(m2.mean - dt) <= 3 * m2.se);
    }

    TEST_CASE("derived seeds differ across streams") {
        std::set<std::uint64_t> seen;
        for (std::uint64_t k = 0; k < 1000; ++k) seen.insert(derive_seed(1, k));
        CHECK(seen.size() == 1000);
        CHECK(derive_seed(1, 3) == derive_seed(1, 3));
    }

    TEST_CASE("invalid noise definitions") {
        const MeasureSpace s(State::Ones(4));
        CHECK_THROWS_AS(DiagonalNoise::indicators(s, {{0, 1}, {1, 2}}, {1.0, 1.0}),
                        InvalidParameters);
        CHECK_THROWS(DiagonalNoise::indicators(s, {{0}}, {1.0, 1.0}));
        CHECK_THROWS(DiagonalNoise::indicators(s, {{9}}, {1.0}));
        CHECK_FALSE(DiagonalNoise::none(s).active());
    }
}

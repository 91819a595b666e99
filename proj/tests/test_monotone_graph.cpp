#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "spme/errors.hpp"
#include "spme/monotone_graph.hpp"

using namespace spme;

namespace {

/// Bisection on y ↦ y + κ·Ψ(y) ∋ r using only eval_set.
double bisect_inclusion(const MonotoneGraph& g, double kappa, double r, double m = 0.0) {
    auto J = [m](double y) { return m > 0.0 ? std::pow(std::abs(y), m - 1.0) * y : y; };
    double lo = -std::abs(r) - 1.0, hi = std::abs(r) + 1.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        const Interval s = g.eval_set(mid);
        if (J(mid) + kappa * s.hi < r)
            lo = mid;
        else if (J(mid) + kappa * s.lo > r)
            hi = mid;
        else
            return mid;
    }
    return 0.5 * (lo + hi);
}

double grid_envelope(const MonotoneGraph& g, double lambda, double r) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = -20000; k <= 20000; ++k) {
        const double rb = k * 1e-4;
        best = std::min(best, (r - rb) * (r - rb) / (2.0 * lambda) + g.primitive(rb));
    }
    return best;
}

}  // namespace

TEST_SUITE("monotone_graph") {
    TEST_CASE("eval_set on the discontinuous example and the sign graph") {
        const auto ex = MonotoneGraph::example_discontinuous(1.0);
        CHECK(ex.eval_set(1.0) == Interval{1.0, 2.0});
        CHECK(ex.eval_set(-1.0) == Interval{-2.0, -1.0});
        CHECK(ex.eval_set(0.0) == Interval{0.0, 0.0});
        CHECK(ex.eval_set(0.5).lo == doctest::Approx(0.5));
        CHECK(ex.eval_set(1.5) == Interval{2.0, 2.0});
        CHECK(ex.eval_set(3.0).lo == doctest::Approx(3.0));
        const auto s = MonotoneGraph::sign();
        CHECK(s.eval_set(0.0) == Interval{-1.0, 1.0});
        CHECK(s.eval_set(2.0) == Interval{1.0, 1.0});
        CHECK(s.eval_set(-0.1) == Interval{-1.0, -1.0});
    }

    TEST_CASE("example graph with m = 2 has power branches") {
        const auto ex = MonotoneGraph::example_discontinuous(2.0);
        CHECK(ex.eval_set(0.5).lo == doctest::Approx(0.25));
        CHECK(ex.eval_set(-0.5).lo == doctest::Approx(-0.25));
        CHECK(ex.eval_set(3.0).lo == doctest::Approx(3.0));
        CHECK(ex.eval_set(1.0) == Interval{1.0, 2.0});
        CHECK(ex.is_maximal());
    }

    TEST_CASE("minimal section") {
        CHECK(MonotoneGraph::sign().minimal_section(0.0) == 0.0);
        CHECK(MonotoneGraph::example_discontinuous(1.0).minimal_section(1.0) == 1.0);
        CHECK(MonotoneGraph::example_discontinuous(1.0).minimal_section(-1.0) == -1.0);
        CHECK(MonotoneGraph::fast_diffusion(0.5).minimal_section(4.0) == doctest::Approx(2.0));
    }

    TEST_CASE("resolvent and Yosida values on the sign graph") {
        const auto s = MonotoneGraph::sign();
        CHECK(s.resolvent(1.0, 0.5) == doctest::Approx(0.0));
        CHECK(s.resolvent(1.0, 3.0) == doctest::Approx(2.0));
        CHECK(s.resolvent(1.0, -3.0) == doctest::Approx(-2.0));
        CHECK(s.yosida(1.0, 0.5) == doctest::Approx(0.5));
        CHECK(s.yosida(1.0, 3.0) == doctest::Approx(1.0));
        for (const auto& g : {MonotoneGraph::sign(), MonotoneGraph::example_discontinuous(2.0),
                              MonotoneGraph::fast_diffusion(0.3)}) {
            CHECK(g.resolvent(1.0, 0.0) == 0.0);
            CHECK(g.yosida(0.37, 0.0) == 0.0);
        }
    }

    TEST_CASE("resolvent matches an independent bisection oracle") {
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> r(-6.0, 6.0), l(0.01, 3.0);
        for (const auto& g : {MonotoneGraph::sign(), MonotoneGraph::example_discontinuous(1.0),
                              MonotoneGraph::example_discontinuous(3.0),
                              MonotoneGraph::fast_diffusion(0.5), MonotoneGraph::linear(2.0)}) {
            for (int k = 0; k < 300; ++k) {
                const double x = r(rng), lam = l(rng);
                CHECK(g.resolvent(lam, x) == doctest::Approx(bisect_inclusion(g, lam, x)).epsilon(1e-9));
            }
        }
    }

    TEST_CASE("Yosida value lies in the graph at the resolvent") {
        std::mt19937_64 rng(12);
        std::uniform_real_distribution<double> r(-5.0, 5.0);
        const auto g = MonotoneGraph::example_discontinuous(2.0);
        for (int k = 0; k < 500; ++k) {
            const double x = r(rng), lam = 0.3;
            CHECK(g.eval_set(g.resolvent(lam, x)).contains(g.yosida(lam, x), 1e-9));
        }
    }

    TEST_CASE("primitive") {
        CHECK(MonotoneGraph::sign().primitive(0.0) == 0.0);
        CHECK(MonotoneGraph::linear(1.0).primitive(2.0) == doctest::Approx(2.0));
        CHECK(MonotoneGraph::sign().primitive(3.0) == doctest::Approx(3.0));
        CHECK(MonotoneGraph::sign().primitive(-3.0) == doctest::Approx(3.0));
        // Example graph, m = 1: ∫₀^1.5 = ½ + 2·0.5.
        CHECK(MonotoneGraph::example_discontinuous(1.0).primitive(1.5) == doctest::Approx(1.5));
        std::mt19937_64 rng(13);
        std::uniform_real_distribution<double> r(-4.0, 4.0);
        const auto g = MonotoneGraph::example_discontinuous(2.0);
        for (int k = 0; k < 200; ++k) {
            const double x = r(rng);
            CHECK(g.primitive(x) >= 0.0);
            CHECK(g.primitive(x) <= x * g.minimal_section(x) + 1e-12);
        }
    }

    TEST_CASE("Moreau envelope matches the grid-minimization oracle") {
        CHECK(MonotoneGraph::sign().moreau_envelope(1.0, 0.5) == doctest::Approx(0.125));
        CHECK(MonotoneGraph::linear(1.0).moreau_envelope(1.0, 2.0) == doctest::Approx(1.0));
        CHECK(MonotoneGraph::sign().moreau_envelope(0.7, 0.0) == 0.0);
        const auto g = MonotoneGraph::example_discontinuous(1.0);
        for (double r : {-1.7, -0.4, 0.9, 1.3, 1.9}) {
            const double env = g.moreau_envelope(0.5, r);
            CHECK(env == doctest::Approx(grid_envelope(g, 0.5, r)).epsilon(1e-6));
            CHECK(env >= 0.0);
            CHECK(env <= g.primitive(r) + 1e-12);
        }
    }

    TEST_CASE("duality resolvent matches brute force") {
        const auto s = MonotoneGraph::sign();
        CHECK(s.duality_resolvent(1.0, 0.0) == 0.0);
        CHECK(s.duality_resolvent(1.0, 3.0) == doctest::Approx(2.0));
        CHECK(MonotoneGraph::linear(1.0).duality_resolvent(1.0, 4.0) == doctest::Approx(2.0));
        const auto g = MonotoneGraph::example_discontinuous(2.0);
        for (double m : {1.0, 2.0, 3.5})
            for (double w : {-7.0, -1.5, 0.2, 2.5, 9.0})
                CHECK(g.duality_resolvent(m, w) ==
                      doctest::Approx(bisect_inclusion(g, 1.0, w, m)).epsilon(1e-9));
    }

    TEST_CASE("shift inverse inverts Psi_lambda + lambda I") {
        std::mt19937_64 rng(14);
        std::uniform_real_distribution<double> w(-8.0, 8.0);
        for (const auto& g : {MonotoneGraph::sign(), MonotoneGraph::example_discontinuous(2.0),
                              MonotoneGraph::fast_diffusion(0.5)}) {
            for (double lam : {0.5, 0.1, 0.01}) {
                for (int k = 0; k < 100; ++k) {
                    const double v = w(rng);
                    const ShiftInverse si = g.yosida_shift_inverse(lam, v);
                    CHECK(g.yosida(lam, si.y) + lam * si.y == doctest::Approx(v).epsilon(1e-10));
                    const double h = 1e-6;
                    const double fd = (g.yosida_shift_inverse(lam, v + h).y -
                                       g.yosida_shift_inverse(lam, v - h).y) / (2 * h);
                    CHECK(si.slope > 0.0);
                    CHECK(si.slope <= 1.0 / lam + 1e-9);
                    if (std::abs(fd - si.slope) > 1e-3 * (1.0 + si.slope)) {
                        // Only allowed right at a kink of the inverse.
                        const double left = (si.y - g.yosida_shift_inverse(lam, v - h).y) / h;
                        const double right = (g.yosida_shift_inverse(lam, v + h).y - si.y) / h;
                        CHECK(si.slope >= std::min(left, right) - 1e-3);
                        CHECK(si.slope <= std::max(left, right) + 1e-3);
                    }
                }
            }
        }
    }

    TEST_CASE("pointwise limit as lambda goes to zero") {
        const auto g = MonotoneGraph::example_discontinuous(2.0);
        for (double r : {-2.5, -1.0, -0.3, 0.0, 1.0, 1.5, 3.0}) {
            double prev = std::numeric_limits<double>::infinity();
            for (double lam : {1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6}) {
                const double err = std::abs(g.yosida(lam, r) - g.minimal_section(r));
                CHECK(err <= prev + 1e-10);
                prev = err;
            }
            CHECK(prev < 1e-4);
        }
    }

    TEST_CASE("growth bound transfers to the Yosida approximation") {
        const auto g = MonotoneGraph::example_discontinuous(2.0);
        std::mt19937_64 rng(15);
        std::uniform_real_distribution<double> r(-10.0, 10.0);
        for (int k = 0; k < 300; ++k) {
            const double x = r(rng);
            CHECK(std::abs(g.yosida(0.2, x)) <=
                  g.growth_C() * (std::pow(std::abs(x), g.growth_m()) + 1.0) + 1e-12);
        }
    }

    TEST_CASE("construction rejects invalid graphs") {
        const double inf = std::numeric_limits<double>::infinity();
        // Decreasing piece.
        CHECK_THROWS_AS(MonotoneGraph({{-inf, inf, Piece::linear(-1.0)}}, {}, 1.0, 1.0),
                        InvalidParameters);
        // 0 ∉ Ψ(0).
        CHECK_THROWS_AS(MonotoneGraph({{-inf, inf, Piece::linear(1.0, 1.0)}}, {}, 1.0, 2.0),
                        InvalidParameters);
        // Growth bound broken.
        CHECK_THROWS_AS(MonotoneGraph({{-inf, inf, Piece::power(3.0, 1.0, 0.0)}}, {}, 1.0, 1.0),
                        InvalidParameters);
    }

    TEST_CASE("unfilled jump is reported and the resolvent refuses it") {
        const double inf = std::numeric_limits<double>::infinity();
        const MonotoneGraph g({{-inf, 0.0, Piece::constant(-1.0)}, {0.0, inf, Piece::constant(1.0)}},
                              {{0.0, {0.0, 0.0}}}, 1.0, 1.0);
        CHECK_FALSE(g.is_maximal());
        CHECK(g.gaps().size() == 2);  // (−1, 0) and (0, 1) at the origin
        CHECK_THROWS_AS(g.resolvent(1.0, 0.5), NonMaximalGraph);
    }

    TEST_CASE("YosidaView forwards to the graph") {
        auto g = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
        const YosidaView v(g, 1.0);
        CHECK(v(3.0) == doctest::Approx(1.0));
        CHECK(v.resolvent(3.0) == doctest::Approx(2.0));
        CHECK(v.envelope(0.5) == doctest::Approx(0.125));
    }
}

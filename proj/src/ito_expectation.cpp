#include "spme/ito_expectation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spme/errors.hpp"
#include "spme/noise_model.hpp"

namespace spme {

namespace {

constexpr double kTimeTol = 1e-14;

bool even_integer(double p) {
    return p >= 2.0 && p == std::floor(p) && static_cast<long long>(p) % 2 == 0;
}

double lp_pow(const State& w, const State& u, double p) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < u.size(); ++i) s += w[i] * std::pow(std::abs(u[i]), p);
    return s;
}

void sort_unique(std::vector<double>& ts) {
    std::sort(ts.begin(), ts.end());
    std::vector<double> out;
    for (double t : ts)
        if (out.empty() || t - out.back() > kTimeTol * std::max(1.0, std::abs(t))) out.push_back(t);
    ts = std::move(out);
}

/// Piece i restricted to [0, t], or an empty interval.
std::pair<double, double> clipped(const SimpleProcess& sp, std::size_t i, double t) {
    const double a = std::min(sp.tau[i], t);
    const double b = std::min(sp.tau[i + 1], t);
    return {a, b};
}

struct Quadrature {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Sampling times shared by both sides, plus the GL rule on [−1, 1].
std::vector<double> path_times(const SimpleProcess& sp, double t, const Quadrature& q) {
    std::vector<double> ts{0.0, t};
    for (double tau : sp.tau) ts.push_back(std::min(tau, t));
    for (std::size_t i = 0; i < sp.pieces(); ++i) {
        auto [a, b] = clipped(sp, i, t);
        if (b <= a) continue;
        for (double x : q.nodes) ts.push_back(0.5 * (a + b) + 0.5 * (b - a) * x);
    }
    sort_unique(ts);
    return ts;
}

struct PathSample {
    double lhs = 0.0;
    double rhs = 0.0;
};

PathSample evaluate_path(const SimpleProcess& sp, double t, const BrownianPath& path,
                         const Quadrature& q, const ItoOptions& opts) {
    const double p = sp.p;
    const State& mu = sp.weights;
    PathSample out;
    out.lhs = lp_pow(mu, evolve(sp, t, path), p);

    double drift = 0.0, qv = 0.0, mart = 0.0;
    for (std::size_t i = 0; i < sp.pieces(); ++i) {
        auto [a, b] = clipped(sp, i, t);
        if (b <= a) continue;
        State g2 = State::Zero(mu.size());
        for (std::size_t k = 0; k < sp.modes; ++k) g2 += sp.g[i][k].cwiseAbs2();
        const double half = 0.5 * (b - a);
        for (std::size_t j = 0; j < q.nodes.size(); ++j) {
            const State u = evolve(sp, 0.5 * (a + b) + half * q.nodes[j], path);
            const double w = half * q.weights[j];
            for (Eigen::Index x = 0; x < u.size(); ++x) {
                const double up = std::pow(std::abs(u[x]), p - 2.0);
                drift += w * mu[x] * p * up * u[x] * sp.f[i][x];
                qv += w * mu[x] * up * g2[x];
            }
        }
        if (!opts.martingale_control || sp.modes == 0) continue;
        std::vector<double> grid{a, b};
        for (double x : q.nodes) grid.push_back(0.5 * (a + b) + half * x);
        sort_unique(grid);
        for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
            const State u = evolve(sp, grid[j], path);
            const Eigen::VectorXd dW = path.at(grid[j + 1]) - path.at(grid[j]);
            for (Eigen::Index x = 0; x < u.size(); ++x) {
                double gdw = 0.0;
                for (std::size_t k = 0; k < sp.modes; ++k)
                    gdw += sp.g[i][k][x] * dW[static_cast<Eigen::Index>(k)];
                mart += mu[x] * p * std::pow(std::abs(u[x]), p - 2.0) * u[x] * gdw;
            }
        }
    }
    out.rhs = lp_pow(mu, sp.u0, p) + drift +
              opts.qv_coefficient_scale * 0.5 * p * (p - 1.0) * qv + mart;
    return out;
}

std::vector<PathSample> run_paths(const SimpleProcess& sp, double t, const ItoOptions& opts) {
    sp.validate();
    if (opts.samples < 2) throw InvalidParameters("need at least two samples");
    if (opts.quad_nodes < 2) throw InvalidParameters("need at least two quadrature nodes");
    if (!(t >= 0.0) || t > sp.tau.back() * (1.0 + kTimeTol))
        throw InvalidParameters("t must lie in [0, tau_J]");
    Quadrature q;
    gauss_legendre(opts.quad_nodes, q.nodes, q.weights);
    const std::vector<double> ts = path_times(sp, t, q);
    std::vector<PathSample> out(static_cast<std::size_t>(opts.samples));
    for (int m = 0; m < opts.samples; ++m) {
        std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(m)));
        BrownianPath path(ts, sp.modes, rng);
        out[static_cast<std::size_t>(m)] = evaluate_path(sp, t, path, q, opts);
    }
    return out;
}

MeanSe summarize(const std::vector<PathSample>& xs, double PathSample::*field) {
    std::vector<double> v(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) v[i] = xs[i].*field;
    return mean_se(v);
}

State martingale(const SimpleProcess& sp, double t, const BrownianPath& path) {
    State out = State::Zero(sp.weights.size());
    for (std::size_t i = 0; i < sp.pieces(); ++i) {
        auto [a, b] = clipped(sp, i, t);
        if (b <= a) continue;
        const Eigen::VectorXd dW = path.at(b) - path.at(a);
        for (std::size_t k = 0; k < sp.modes; ++k)
            out += sp.g[i][k] * dW[static_cast<Eigen::Index>(k)];
    }
    return out;
}

}  // namespace

void SimpleProcess::validate() const {
    const Eigen::Index n = weights.size();
    if (n == 0) throw InvalidParameters("simple process needs a non-empty space");
    if ((weights.array() <= 0.0).any()) throw InvalidParameters("weights must be positive");
    if (u0.size() != n) throw DimensionMismatch(static_cast<std::size_t>(n), u0.size());
    if (!even_integer(p)) throw InvalidParameters("p must be an even integer >= 2");
    if (tau.size() != f.size() + 1 || g.size() != f.size())
        throw InvalidParameters("need J + 1 times and J drift and diffusion values");
    if (tau.front() < 0.0) throw InvalidParameters("times must be non-negative");
    for (std::size_t i = 0; i + 1 < tau.size(); ++i)
        if (tau[i + 1] < tau[i]) throw InvalidParameters("times must be non-decreasing");
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i].size() != n) throw DimensionMismatch(static_cast<std::size_t>(n), f[i].size());
        if (g[i].size() != modes)
            throw InvalidParameters("each piece needs one diffusion value per mode");
        for (const State& gk : g[i])
            if (gk.size() != n) throw DimensionMismatch(static_cast<std::size_t>(n), gk.size());
    }
}

BrownianPath::BrownianPath(std::vector<double> times, std::size_t modes, std::mt19937_64& rng)
    : times_(std::move(times)) {
    if (times_.empty() || times_.front() != 0.0)
        throw InvalidParameters("Brownian path times must start at 0");
    values_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(times_.size()),
                                    static_cast<Eigen::Index>(modes));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t r = 1; r < times_.size(); ++r) {
        const double dt = times_[r] - times_[r - 1];
        if (dt < 0.0) throw InvalidParameters("Brownian path times must be sorted");
        const double s = std::sqrt(dt);
        for (std::size_t k = 0; k < modes; ++k) {
            const auto R = static_cast<Eigen::Index>(r), K = static_cast<Eigen::Index>(k);
            values_(R, K) = values_(R - 1, K) + s * normal(rng);
        }
    }
}

BrownianPath::BrownianPath(std::vector<double> times, Eigen::MatrixXd values)
    : times_(std::move(times)), values_(std::move(values)) {
    if (values_.rows() != static_cast<Eigen::Index>(times_.size()))
        throw DimensionMismatch(times_.size(), static_cast<std::size_t>(values_.rows()));
}

Eigen::VectorXd BrownianPath::at(double t) const {
    auto it = std::lower_bound(times_.begin(), times_.end(),
                               t - kTimeTol * std::max(1.0, std::abs(t)));
    if (it == times_.end() || std::abs(*it - t) > kTimeTol * std::max(1.0, std::abs(t)))
        throw InvalidParameters("time not in the Brownian sampling set");
    return values_.row(it - times_.begin()).transpose();
}

State evolve(const SimpleProcess& sp, double t, const BrownianPath& path) {
    State u = sp.u0;
    for (std::size_t i = 0; i < sp.pieces(); ++i) {
        auto [a, b] = clipped(sp, i, t);
        if (b <= a) continue;
        u += (b - a) * sp.f[i];
        if (sp.modes == 0) continue;
        const Eigen::VectorXd dW = path.at(b) - path.at(a);
        for (std::size_t k = 0; k < sp.modes; ++k)
            u += sp.g[i][k] * dW[static_cast<Eigen::Index>(k)];
    }
    return u;
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw InvalidParameters("Gauss-Legendre needs n >= 1");
    nodes.assign(static_cast<std::size_t>(n), 0.0);
    weights.assign(static_cast<std::size_t>(n), 0.0);
    const double pi = std::acos(-1.0);
    const auto un = static_cast<unsigned>(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double pn = std::legendre(un, x);
            const double pm = n > 1 ? std::legendre(un - 1, x) : 1.0;
            dp = n * (x * pn - pm) / (x * x - 1.0);
            const double dx = pn / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        const double pn = std::legendre(un, x);
        const double pm = n > 1 ? std::legendre(un - 1, x) : 1.0;
        dp = n * (x * pn - pm) / (x * x - 1.0);
        nodes[static_cast<std::size_t>(i)] = x;
        weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    std::reverse(nodes.begin(), nodes.end());
    std::reverse(weights.begin(), weights.end());
}

MonteCarloEstimate lhs_moment(const SimpleProcess& sp, double t, const ItoOptions& opts) {
    return summarize(run_paths(sp, t, opts), &PathSample::lhs);
}

MonteCarloEstimate rhs_moment(const SimpleProcess& sp, double t, const ItoOptions& opts) {
    return summarize(run_paths(sp, t, opts), &PathSample::rhs);
}

double analytic_second_moment(const SimpleProcess& sp, double t) {
    sp.validate();
    State mean = sp.u0;
    double var = 0.0;
    for (std::size_t i = 0; i < sp.pieces(); ++i) {
        auto [a, b] = clipped(sp, i, t);
        if (b <= a) continue;
        mean += (b - a) * sp.f[i];
        for (const State& gk : sp.g[i]) var += (b - a) * lp_pow(sp.weights, gk, 2.0);
    }
    return lp_pow(sp.weights, mean, 2.0) + var;
}

ItoReport verify_ito(const SimpleProcess& sp, double t, const ItoOptions& opts) {
    const std::vector<PathSample> xs = run_paths(sp, t, opts);
    ItoReport rep;
    rep.lhs = summarize(xs, &PathSample::lhs);
    rep.rhs = summarize(xs, &PathSample::rhs);
    std::vector<double> d(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) d[i] = xs[i].lhs - xs[i].rhs;
    rep.diff = mean_se(d);
    const double k = opts.se_multiple;
    const double scale = std::max({1.0, std::abs(rep.lhs.mean), std::abs(rep.rhs.mean)});
    rep.passed = std::abs(rep.diff.mean) <= k * rep.diff.se + 1e-12 * scale;
    if (sp.p == 2.0) {
        const double a = analytic_second_moment(sp, t);
        rep.analytic = a;
        const double quad = 1e-10 * std::max(1.0, std::abs(a));
        rep.analytic_gap = std::max(std::abs(rep.lhs.mean - a) - k * rep.lhs.se,
                                    std::abs(rep.rhs.mean - a) - k * rep.rhs.se);
        rep.passed = rep.passed && rep.analytic_gap <= quad;
    }
    return rep;
}

double bdg_constant(double p) {
    if (!(p > 1.0)) throw InvalidParameters("BDG constant needs p > 1");
    return std::pow(p / (p - 1.0), p) * std::pow(0.5 * p * (p - 1.0), 0.5 * p);
}

BdgReport bdg_check(const SimpleProcess& sp, int grid_points, int samples, std::uint64_t seed) {
    sp.validate();
    if (grid_points < 2 || samples < 2) throw InvalidParameters("need grid_points, samples >= 2");
    const double T = sp.tau.back();
    std::vector<double> ts{0.0};
    for (int i = 1; i < grid_points; ++i) ts.push_back(T * i / (grid_points - 1));
    for (double tau : sp.tau) ts.push_back(tau);
    sort_unique(ts);

    std::vector<double> sups(static_cast<std::size_t>(samples));
    for (int m = 0; m < samples; ++m) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
        BrownianPath path(ts, sp.modes, rng);
        double best = 0.0;
        for (double t : ts) best = std::max(best, lp_pow(sp.weights, martingale(sp, t, path), sp.p));
        sups[static_cast<std::size_t>(m)] = best;
    }
    BdgReport rep;
    rep.lhs = mean_se(sups);
    double integral = 0.0;
    for (std::size_t i = 0; i < sp.pieces(); ++i) {
        State g2 = State::Zero(sp.weights.size());
        for (const State& gk : sp.g[i]) g2 += gk.cwiseAbs2();
        const State gnorm = g2.cwiseSqrt();
        integral += (sp.tau[i + 1] - sp.tau[i]) * lp_pow(sp.weights, gnorm, sp.p);
    }
    rep.rhs = bdg_constant(sp.p) * std::pow(T, 0.5 * sp.p - 1.0) * integral;
    rep.passed = rep.lhs.mean <= rep.rhs + 3.0 * rep.lhs.se;
    return rep;
}

MartingaleReport martingale_check(const SimpleProcess& sp, const State& phi,
                                  const std::vector<double>& times, int samples,
                                  std::uint64_t seed, double se_multiple) {
    sp.validate();
    if (phi.size() != sp.weights.size())
        throw DimensionMismatch(static_cast<std::size_t>(sp.weights.size()), phi.size());
    if (samples < 2) throw InvalidParameters("need at least two samples");
    std::vector<double> ts{0.0};
    for (double t : times) ts.push_back(t);
    for (double tau : sp.tau) ts.push_back(tau);
    sort_unique(ts);

    std::vector<std::vector<double>> values(times.size(), std::vector<double>(samples));
    for (int m = 0; m < samples; ++m) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
        BrownianPath path(ts, sp.modes, rng);
        for (std::size_t j = 0; j < times.size(); ++j) {
            const State M = martingale(sp, std::min(times[j], sp.tau.back()), path);
            values[j][static_cast<std::size_t>(m)] = sp.weights.dot(phi.cwiseProduct(M));
        }
    }
    MartingaleReport rep;
    rep.times = times;
    rep.passed = true;
    for (const auto& v : values) {
        const MeanSe ms = mean_se(v);
        rep.pairing.push_back(ms);
        if (std::abs(ms.mean) > se_multiple * ms.se + 1e-15) rep.passed = false;
    }
    return rep;
}

}  // namespace spme

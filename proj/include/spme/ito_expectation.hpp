#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "spme/dirichlet_space.hpp"
#include "spme/statistics.hpp"

namespace spme {

/// Step-function integrands on deterministic times τ_0 ≤ τ_1 ≤ … ≤ τ_J:
/// f = Σ f^i 1_{(τ_{i−1}, τ_i]} and g_k = Σ g_k^i 1_{(τ_{i−1}, τ_i]} for k < modes,
/// with the process u(t) = u0 + ∫₀^t f ds + Σ_k ∫₀^t g_k dW_k.
struct SimpleProcess {
    State weights;               // μ of the underlying finite space
    State u0;
    std::vector<double> tau;     // J + 1 times
    std::vector<State> f;        // J drift values
    std::vector<std::vector<State>> g;  // J × modes diffusion values
    std::size_t modes = 0;
    double p = 2.0;

    /// Throws InvalidParameters on inconsistent shapes, unsorted times or odd p.
    void validate() const;
    std::size_t pieces() const { return f.size(); }
};

/// Brownian coordinates W_k sampled at a sorted set of times (W(0) = 0).
class BrownianPath {
public:
    BrownianPath(std::vector<double> times, std::size_t modes, std::mt19937_64& rng);
    /// Path with prescribed values; rows are times, columns modes.
    BrownianPath(std::vector<double> times, Eigen::MatrixXd values);

    const std::vector<double>& times() const noexcept { return times_; }
    /// W(t) for a time present in the sampling set.
    Eigen::VectorXd at(double t) const;

private:
    std::vector<double> times_;
    Eigen::MatrixXd values_;
};

/// Exact u(t) from the path (no time stepping).
State evolve(const SimpleProcess& sp, double t, const BrownianPath& path);

/// Gauss–Legendre nodes and weights on [−1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

using MonteCarloEstimate = MeanSe;

struct ItoOptions {
    int samples = 100000;
    int quad_nodes = 8;
    double se_multiple = 3.0;
    /// Adds the left-point Itô sum of p|u|^{p−2}u·g dW to each RHS sample.
    /// It has mean exactly zero, so the RHS estimator stays unbiased, and it
    /// cancels most of the path noise shared with the LHS.
    bool martingale_control = true;
    /// Multiplies the ½p(p−1) coefficient; values ≠ 1 give a negative control.
    double qv_coefficient_scale = 1.0;
    std::uint64_t seed = 1;
};

struct ItoReport {
    MonteCarloEstimate lhs;
    MonteCarloEstimate rhs;
    MonteCarloEstimate diff;  // paired lhs − rhs
    std::optional<double> analytic;  // p = 2 closed form
    double analytic_gap = 0.0;       // max(|lhs − analytic| − k·SE(lhs), |rhs − analytic| − k·SE(rhs))
    bool passed = false;
};

/// E|u(t)|_p^p over the paths of `opts`.
MonteCarloEstimate lhs_moment(const SimpleProcess& sp, double t, const ItoOptions& opts);
/// |u0|_p^p + E∫₀^t∫ p|u|^{p−2}u f dμ ds + ½p(p−1) E∫₀^t∫ |u|^{p−2}|g|²_{ℓ₂} dμ ds.
MonteCarloEstimate rhs_moment(const SimpleProcess& sp, double t, const ItoOptions& opts);
/// Both sides on common paths; pass iff |mean diff| ≤ se_multiple·SE(diff) + 1e-12·scale.
/// For p = 2 both estimates must also agree with the closed form to
/// se_multiple·SE plus a 1e-10 relative quadrature allowance.
ItoReport verify_ito(const SimpleProcess& sp, double t, const ItoOptions& opts);

/// |u0 + ∫₀^t f|²_2 + ∫₀^t Σ_k |g_k|²_2 ds.
double analytic_second_moment(const SimpleProcess& sp, double t);

/// c_p = (p/(p−1))^p (p(p−1)/2)^{p/2}.
double bdg_constant(double p);

struct BdgReport {
    MonteCarloEstimate lhs;  // E sup_grid |𝐌(g)(t)|_p^p
    double rhs = 0.0;        // c_p T^{p/2−1} ∫₀^T |g(s)|^p_{L^p(μ;ℓ₂)} ds
    bool passed = false;
};

BdgReport bdg_check(const SimpleProcess& sp, int grid_points, int samples, std::uint64_t seed);

struct MartingaleReport {
    std::vector<double> times;
    std::vector<MonteCarloEstimate> pairing;  // E⟨φ, 𝐌(g)(t)⟩_μ
    bool passed = false;
};

MartingaleReport martingale_check(const SimpleProcess& sp, const State& phi,
                                  const std::vector<double>& times, int samples,
                                  std::uint64_t seed, double se_multiple = 3.0);

}  // namespace spme

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spme/dirichlet_space.hpp"
#include "spme/monotone_graph.hpp"
#include "spme/noise_model.hpp"
#include "spme/resolvent_solver.hpp"

namespace spme {

/// Approximation level being simulated.
///  eps_level:    explicit Euler for dX + A^{ν,ε}_λ(X)dt = B(X)dW.
///  nu_level:     implicit Euler for dX + (ν − L)(Ψ_λ + λI)(X)dt = B(X)dW.
///  lambda_level: nu_level with ν = 0 (needs a transient operator).
enum class Level { eps_level, nu_level, lambda_level };

const char* to_string(Level level);
Level level_from_string(const std::string& name);

struct SimConfig {
    double T = 1.0;
    int steps = 100;
    Level level = Level::nu_level;
    double lambda = 0.1;
    double nu = 0.1;
    double eps = 0.1;
    State initial;
    double m = 1.0;
    /// Index of the equivalent dual norm ‖·‖_{F*ν0} recorded per step.
    double nu0 = 0.5;
    SolverOptions solver;

    double dt() const { return T / steps; }
    /// ν actually used by the level (0 at lambda_level).
    double effective_nu() const { return level == Level::lambda_level ? 0.0 : nu; }
};

/// Norms of one state X_n. `w` is the drift integrand: (Ψ_λ + λI)(X_n) for
/// the implicit levels and (Ψ_λ + λI)(J_ε X_n) at eps_level.
struct StepRecord {
    double time = 0.0;
    double l2_sq = 0.0;          // |X|_2^2
    double l2m_pow = 0.0;        // |X|_{2m}^{2m}
    double dual_nu0 = 0.0;       // ‖X‖_{F*ν0}
    double dual_e = 0.0;         // ‖X‖_{F*e}, NaN if −L is singular
    double psi_l2_sq = 0.0;      // |Ψ_λ(X)|_2^2
    double psi_l2m_pow = 0.0;    // |Ψ_λ(X)|_{2m}^{2m}
    double drift_dual_sq = 0.0;  // ‖(ν − L)w‖²_{F*ν} = ⟨(ν − L)w, w⟩
    double pairing = 0.0;        // ⟨w, X⟩ (implicit) or ⟨w, J_ε X⟩ (eps_level)
    int iterations = 0;          // solver iterations spent producing X_n
};

struct Trajectory {
    std::uint64_t stream_id = 0;
    std::vector<StepRecord> records;  // K + 1 entries
    std::vector<State> states;        // kept on request
};

/// Time stepper for one configuration. Not thread-safe; use one per thread.
class Simulator {
public:
    Simulator(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
              const DiagonalNoise& noise, SimConfig cfg);

    const SimConfig& config() const noexcept { return cfg_; }
    const DirichletOperator& op() const noexcept { return op_; }
    const DiagonalNoise& noise() const noexcept { return noise_; }

    /// X_{n+1} = J_dt(X_n + B(X_n)ΔW) with ε := dt.
    State step_implicit(const State& x, const State& dW, ResolventResult* info = nullptr) const;
    /// X_{n+1} = X_n − dt·A^{ν,ε}_λ(X_n) + B(X_n)ΔW.
    State step_yosida_explicit(const State& x, const State& dW,
                               ResolventResult* info = nullptr) const;

    Trajectory run(std::uint64_t master_seed, std::uint64_t stream_id,
                   bool keep_states = false) const;

private:
    StepRecord record(const State& x, const State& w, const State& drift_point, double t) const;

    const DirichletOperator& op_;
    std::shared_ptr<const MonotoneGraph> graph_;
    const DiagonalNoise& noise_;
    SimConfig cfg_;
    std::unique_ptr<ResolventSolver> solver_;
    bool transient_;
};

/// M trajectories with stream ids 0..M−1.
std::vector<Trajectory> simulate(const DirichletOperator& op,
                                 std::shared_ptr<const MonotoneGraph> graph,
                                 const DiagonalNoise& noise, const SimConfig& cfg, int M,
                                 std::uint64_t master_seed, bool keep_states = false);

enum class MomentKind { l2, l2m };

/// Per-time sample means and standard errors.
struct MomentSeries {
    std::vector<double> time;
    std::vector<double> mean;
    std::vector<double> se;
    double sup_mean() const;
};

MomentSeries estimate_moments(const std::vector<Trajectory>& ensemble, MomentKind kind);

/// Sample mean and SE of Σ_n dt·f(record_n) over n < K.
struct ScalarEstimate {
    double mean = 0.0;
    double se = 0.0;
    int samples = 0;
};
ScalarEstimate time_integral(const std::vector<Trajectory>& ensemble, double dt,
                             double StepRecord::*field);

enum class DiffNorm { extended, nu0 };

struct DifferenceEstimate {
    ScalarEstimate sup_sq;  // E sup_n ‖X_A(t_n) − X_B(t_n)‖²
    double param_a = 0.0;
    double param_b = 0.0;
};

/// Runs both configurations on identical increment streams. The configs must
/// agree on everything except λ, ν and ε; otherwise ConfigMismatch.
DifferenceEstimate coupled_difference(const DirichletOperator& op,
                                      std::shared_ptr<const MonotoneGraph> graph,
                                      const DiagonalNoise& noise, const SimConfig& a,
                                      const SimConfig& b, int M, std::uint64_t master_seed,
                                      DiffNorm norm, double nu0 = 0.5);

struct DissipationReport {
    std::vector<double> norms;  // ‖X_n‖ in F*_ν of the run (F*_e at lambda_level)
    int violations = 0;         // steps with ‖X_{n+1}‖ > ‖X_n‖(1 + 1e-12)
    double max_increase = 0.0;
    double ledger_max = 0.0;    // max ½‖X_{n+1}‖² − ½‖X_n‖² + dt⟨w_{n+1}, X_{n+1}⟩
    bool passed() const { return violations == 0; }
};

/// Noise-free run; the Lyapunov norm is the dual norm of index ν of the level.
DissipationReport deterministic_dissipation(const DirichletOperator& op,
                                            std::shared_ptr<const MonotoneGraph> graph,
                                            const SimConfig& cfg);

struct Prop71Report {
    ScalarEstimate lhs;        // E Σ dt ‖(ν − L)w_n‖²_{F*ν}
    double bound = 0.0;        // ½(1/λ + λ + C5) e^{C3sq·T} |x|_2^2
    double C3sq = 0.0;         // Σ μ_k² |e_k|²_∞
    double C5 = 0.0;           // 2·Lip(Ψ_λ + λI) = 2(1/λ + λ)
    double C5_measured = 0.0;  // max pointwise Γ(w,w)/Γ(J_εX, w) seen on the run
    double slack = 0.0;        // bound − lhs; pass iff lhs ≤ bound + 3 SE
    bool passed = false;
};

/// Needs an eps_level configuration with dt ≤ 2ε and a jump kernel.
Prop71Report certify_prop71(const DirichletOperator& op,
                            std::shared_ptr<const MonotoneGraph> graph,
                            const DiagonalNoise& noise, const SimConfig& cfg, int M,
                            std::uint64_t master_seed);

/// RFC 4180 CSV of the per-step records of an ensemble.
std::string trajectories_csv(const std::vector<Trajectory>& ensemble);

}  // namespace spme

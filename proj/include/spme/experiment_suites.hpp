#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spme/dirichlet_space.hpp"
#include "spme/experiment_config.hpp"
#include "spme/ito_expectation.hpp"
#include "spme/monotone_graph.hpp"
#include "spme/noise_model.hpp"
#include "spme/spde_simulator.hpp"

namespace spme {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kOutputSchemaVersion = 1;

enum class Verdict { pass, fail, skipped };
const char* to_string(Verdict v);

/// RFC 4180 table with a mandatory header row.
struct CsvTable {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string text() const;
};

struct SuiteResult {
    std::string name;
    Verdict verdict = Verdict::skipped;
    std::string reason;       // why a suite was skipped or failed
    nlohmann::json details;   // suite-specific measurements
    std::vector<CsvTable> tables;
    /// Extra files as (file name suffix, content).
    std::vector<std::pair<std::string, std::string>> attachments;

    bool passed() const { return verdict == Verdict::pass; }
    nlohmann::json to_json() const;
};

using NamedGraph = std::pair<std::string, std::shared_ptr<const MonotoneGraph>>;

/// Discontinuous example (m = 2), sign and fast diffusion (γ = 1/2).
std::vector<NamedGraph> standard_graphs();

/// Resolvent nonexpansiveness, (1/λ)-Lipschitz Yosida map, |Ψ_λ| ≤ |Ψ⁰| and
/// r = λΨ_λ(r) + J_λ(r) on random (r, r′, λ) triples. Slack is scaled by max(1, |r|, |r′|).
SuiteResult graph_suite(const std::vector<NamedGraph>& graphs, int triples, std::uint64_t seed,
                        double slack = 1e-10);

/// Monotonicity of ν ↦ ‖l‖_{F*ν}, the ν → 0 limit, the sandwich bound, the
/// Riesz identity and the L² embedding on random functionals.
SuiteResult norm_suite(const DirichletOperator& op, int functionals, std::uint64_t seed);

/// certify_lemma41 over grid³ of (ε, ν, λ).
SuiteResult lemma41_suite(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                          const std::vector<double>& grid, int trials,
                          const std::vector<double>& p_list, std::uint64_t seed,
                          double slack = 1e-8);

/// Γ(φ(u),φ(u)) ≤ 2·Lip(φ)·Γ(u,φ(u)) on random (u, φ) pairs and the energy identity
/// ℰ(u,u) = ½Σ Γ(u,u)μ + killing.
SuiteResult h4_suite(const DirichletOperator& op, int pairs, std::uint64_t seed);

/// Structural constants C2, C3, C4 of the noise certified on samples and a ν grid, plus
/// the increment sampler's first two moments.
SuiteResult noise_suite(const DirichletOperator& op, const DiagonalNoise& noise,
                        const std::vector<double>& nu_grid, double m, std::uint64_t seed);

/// Noise-free runs at nu_level and (when −L is invertible) lambda_level.
SuiteResult dissipation_suite(const DirichletOperator& op,
                              std::shared_ptr<const MonotoneGraph> graph, const SimConfig& base);

/// Energy bound E Σ dt ‖(ν − L)w‖²_{F*ν} ≤ ½(1/λ + λ + C5)e^{C3²T}|x|²_2 on an eps_level run.
SuiteResult prop71_suite(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                         const DiagonalNoise& noise, const SimConfig& cfg, int samples,
                         std::uint64_t seed);

/// Moment bounds with C fitted at (λ, ν, ε) = `fit` and frozen over grid³.
SuiteResult moments_suite(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                          const DiagonalNoise& noise, const SimConfig& base, double fit,
                          const std::vector<double>& grid, int samples, std::uint64_t seed);

/// Coupled λ vs λ/2 differences in ‖·‖_{F*e} at lambda_level with a log-log slope window.
SuiteResult lambda_study(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                         const DiagonalNoise& noise, const SimConfig& base,
                         const StudySpec& study, std::uint64_t seed);
/// Coupled ν vs ν/2 differences in ‖·‖_{F*ν0} at nu_level; must decrease monotonically.
SuiteResult nu_study(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                     const DiagonalNoise& noise, const SimConfig& base, const StudySpec& study,
                     std::uint64_t seed);
/// Coupled ε vs ε/2 differences in ‖·‖_{F*ν0} at eps_level; must decrease monotonically.
SuiteResult eps_study(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                      const DiagonalNoise& noise, const SimConfig& base, const StudySpec& study,
                      std::uint64_t seed);

/// Itô-in-expectation battery: zero process, p = 2 closed-form family,
/// random p ∈ {4, 6} instances, the single-point Gaussian p = 4 oracle,
/// martingale and BDG checks, and a negative control that must fail.
SuiteResult ito_suite(const ItoSpec& spec, std::uint64_t seed);

/// Ensemble export: per-step records of every trajectory.
SuiteResult simulate_suite(const DirichletOperator& op, std::shared_ptr<const MonotoneGraph> graph,
                           const DiagonalNoise& noise, const SimConfig& cfg, int samples,
                           std::uint64_t seed);

struct RunOptions {
    std::filesystem::path out_dir;
    std::vector<std::string> suites;  // empty: every suite of the command
    bool record_time = false;
};

struct RunOutcome {
    std::vector<SuiteResult> results;
    int exit_code = 0;  // 0 all pass, 1 any failure
};

/// Suites run by a command: verify, converge, ito or simulate.
std::vector<std::string> command_suites(const std::string& command);

/// Runs a command, writes one JSON file per suite, its CSV tables and
/// manifest.json into opts.out_dir (created when missing).
RunOutcome run_command(const std::string& command, const ExperimentConfig& cfg,
                       const RunOptions& opts);

/// Writes `text` to `path` through a temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace spme

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spme/dirichlet_space.hpp"
#include "spme/monotone_graph.hpp"
#include "spme/noise_model.hpp"
#include "spme/spde_simulator.hpp"

namespace spme {

inline constexpr int kConfigSchemaVersion = 1;

struct KernelEntry {
    std::size_t i = 0;
    std::size_t j = 0;
    double value = 0.0;
    friend bool operator==(const KernelEntry&, const KernelEntry&) = default;
};

/// Operator descriptor; only the fields of the chosen kind are read and written.
///   grid:        dim, sides, h
///   spectral:    dim, sides, h (the base grid) and bernstein terms
///   jump_kernel: weights, kernel entries, killing, allow_recurrent
///   sierpinski:  level, c, lambda_p, rho
struct OperatorSpec {
    std::string kind = "grid";
    int dim = 1;
    std::vector<int> sides{64};
    double h = 1.0 / 65.0;
    std::vector<Bernstein::Term> bernstein;
    std::vector<double> weights;
    std::vector<KernelEntry> kernel;
    std::vector<double> killing;
    bool allow_recurrent = false;
    int level = 3;
    double c = 0.2;
    double lambda_p = 0.5;
    double rho = 1.0;

    bool operator==(const OperatorSpec& o) const;
};

struct NoiseSpec {
    std::string kind = "eigenmodes";  // none | constant | indicators | eigenmodes
    std::vector<double> coeffs{1.0, 0.5};
    std::vector<std::vector<std::size_t>> sets;  // indicators only
    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct InitialSpec {
    std::string kind = "sine";  // sine | constant | values
    double amplitude = 1.0;
    std::vector<double> values;
    friend bool operator==(const InitialSpec&, const InitialSpec&) = default;
};

struct SimulationSpec {
    double T = 0.05;
    int steps = 256;
    std::string level = "eps_level";
    double lambda = 0.1;
    double nu = 0.1;
    double eps = 0.1;
    double m = 1.0;
    double nu0 = 0.5;
    int samples = 200;
    InitialSpec initial;
    friend bool operator==(const SimulationSpec&, const SimulationSpec&) = default;
};

struct StudySpec {
    std::vector<double> lambda_grid{0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125};
    std::vector<double> nu_grid{0.5, 0.25, 0.125, 0.0625};
    std::vector<double> eps_grid{0.2, 0.1, 0.05, 0.025};
    double T = 0.5;
    int steps = 256;
    int samples = 200;
    double slope_lo = 0.7;
    double slope_hi = 1.3;
    friend bool operator==(const StudySpec&, const StudySpec&) = default;
};

struct VerifySpec {
    int graph_triples = 10000;
    int functionals = 1000;
    int lemma41_trials = 1000;
    std::vector<double> lemma41_grid{0.1, 0.01};
    std::vector<double> p_list{2.0, 4.0, 6.0};
    int h4_pairs = 1000;
    std::vector<double> noise_nu_grid{1.0, 1e-2, 1e-4, 1e-6};
    int prop71_samples = 200;
    friend bool operator==(const VerifySpec&, const VerifySpec&) = default;
};

struct ItoSpec {
    int samples = 100000;
    int quad_nodes = 8;
    double se_multiple = 3.0;
    double negative_control_scale = 1.2;
    friend bool operator==(const ItoSpec&, const ItoSpec&) = default;
};

/// Complete experiment description. Every field has a schema default; the
/// serializer always writes every field, so parse ∘ serialize is the identity.
struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    std::uint64_t seed = 20240601;
    std::string output_dir = "spme_out";
    std::vector<std::string> suites;  // empty selects every suite of a command
    OperatorSpec op;
    std::shared_ptr<const MonotoneGraph> graph;
    NoiseSpec noise;
    SimulationSpec simulation;
    StudySpec study;
    VerifySpec verify;
    ItoSpec ito;

    bool operator==(const ExperimentConfig& o) const;
};

/// Schema defaults with the sign graph.
ExperimentConfig default_config();

/// Throws ConfigError naming the offending field path (e.g. "simulation.lambda").
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

nlohmann::json serialize_config(const ExperimentConfig& cfg);
/// Canonical text: sorted keys, two-space indent, trailing newline.
std::string config_text(const ExperimentConfig& cfg);
/// FNV-1a 64 of config_text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

nlohmann::json graph_to_json(const MonotoneGraph& g);
MonotoneGraph graph_from_json(const nlohmann::json& j, const std::string& path = "graph");

DirichletOperator build_operator(const OperatorSpec& spec);
DiagonalNoise build_noise(const NoiseSpec& spec, const DirichletOperator& op);
State build_initial(const InitialSpec& spec, std::size_t n);
SimConfig build_sim_config(const SimulationSpec& spec, std::size_t n);

}  // namespace spme

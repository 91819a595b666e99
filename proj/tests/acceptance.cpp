// Acceptance runner: one line per criterion, exit status 1 if any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "spme/dirichlet_space.hpp"
#include "spme/experiment_config.hpp"
#include "spme/experiment_suites.hpp"
#include "spme/monotone_graph.hpp"
#include "spme/noise_model.hpp"

using namespace spme;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240601;

struct Outcome {
    bool pass = false;
    std::string summary;
};

struct Backend {
    std::string name;
    DirichletOperator op;
};

/// μ-symmetric random kernel on n points with killing on the first point.
DirichletOperator random_jump_kernel(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.5, 1.5), C(0.0, 1.0);
    State mu(n);
    for (auto& v : mu) v = U(rng) / n;
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double c = (j == i + 1 || C(rng) < 0.2) ? U(rng) / n : 0.0;
            if (c == 0.0) continue;
            t.emplace_back(i, j, c / mu(i));
            t.emplace_back(j, i, c / mu(j));
        }
    SparseMatrix J(n, n);
    J.setFromTriplets(t.begin(), t.end());
    State kappa = State::Zero(n);
    kappa(0) = 1.0;
    kappa(n - 1) = 1.0;
    return build_jump_kernel(MeasureSpace(mu), J, kappa);
}

std::vector<Backend> backends(int grid_n) {
    std::vector<Backend> out;
    out.push_back({"grid", build_grid_dirichlet(1, {grid_n}, 1.0 / (grid_n + 1))});
    out.push_back({"spectral",
                   build_spectral_function(build_grid_dirichlet(1, {128}, 1.0 / 129.0),
                                           Bernstein::power(0.75))});
    out.push_back({"jump_kernel", random_jump_kernel(64, 7)});
    out.push_back({"sierpinski", build_sierpinski(5, 0.2, 0.5)});
    return out;
}

State sine_initial(std::size_t n) {
    InitialSpec s;
    return build_initial(s, n);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome c1_graph() {
    const auto t0 = std::chrono::steady_clock::now();
    const SuiteResult r = graph_suite(standard_graphs(), 10000, kSeed, 1e-10);
    const double t = seconds_since(t0);
    return {r.passed() && t < 10.0,
            "3 graphs x 1e4 triples, slack 1e-10: " + std::string(to_string(r.verdict)) +
                ", " + fmt(t) + " s (limit 10 s)"};
}

Outcome c2_norms() {
    const auto t0 = std::chrono::steady_clock::now();
    bool all = true;
    std::string parts;
    for (const auto& b : backends(2000)) {
        const SuiteResult r = norm_suite(b.op, 1000, kSeed);
        all = all && r.passed();
        parts += " " + b.name + "(n=" + std::to_string(b.op.size()) + ")=" + to_string(r.verdict);
        if (!r.passed()) parts += " [" + r.reason + "]";
    }
    const double t = seconds_since(t0);
    return {all && t < 30.0, "1e3 functionals per backend:" + parts + ", " + fmt(t) +
                                 " s (limit 30 s)"};
}

Outcome c3_lemma41() {
    const auto op = build_grid_dirichlet(1, {64}, 1.0 / 65.0);
    bool all = true;
    std::string parts;
    for (const auto& [name, g] : standard_graphs()) {
        const SuiteResult r = lemma41_suite(op, g, {0.1, 0.01}, 1000, {2.0, 4.0, 6.0}, kSeed, 1e-8);
        all = all && r.passed();
        parts += " " + name + "=" + to_string(r.verdict);
    }
    return {all, "grid {0.1, 0.01}^3, 1e3 trials per cell, p in {2,4,6}, slack 1e-8:" + parts};
}

Outcome c4_h4() {
    bool all = true;
    std::string parts;
    const std::vector<Backend> kinds{{"jump_kernel", random_jump_kernel(64, 7)},
                                     {"sierpinski", build_sierpinski(5, 0.2, 0.5)}};
    for (const auto& b : kinds) {
        const SuiteResult r = h4_suite(b.op, 1000, kSeed);
        all = all && r.passed();
        parts += " " + b.name + "=" + to_string(r.verdict) + " (violations " +
                 r.details.value("pointwise_violations", nlohmann::json(-1)).dump() +
                 ", identity error " +
                 fmt(r.details.value("energy_identity_relative_error", -1.0)) + ")";
    }
    return {all, "1e3 pairs, slack 1e-12:" + parts};
}

Outcome c5_moments() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto op = build_grid_dirichlet(1, {64}, 1.0 / 65.0);
    auto graph = std::make_shared<const MonotoneGraph>(MonotoneGraph::example_discontinuous(2.0));
    const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
    SimConfig base;
    base.T = 0.05;
    base.steps = 256;
    base.m = 2.0;
    base.initial = sine_initial(op.size());
    const SuiteResult r = moments_suite(op, graph, noise, base, 0.1, {1e-2, 1e-3}, 200, kSeed);
    const double t = seconds_since(t0);
    return {r.passed() && t < 600.0,
            "discontinuous example m=2, n=64, K=256, M=200, C=" + fmt(r.details.value("C", 0.0)) +
                ", min margin " + fmt(r.details.value("min_margin", 0.0)) + ": " +
                to_string(r.verdict) + ", " + fmt(t) + " s (limit 600 s)"};
}

Outcome c6_cauchy() {
    const auto op = build_grid_dirichlet(1, {64}, 1.0 / 65.0);
    auto graph = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
    const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
    SimConfig base;
    base.initial = sine_initial(op.size());
    StudySpec study;
    const SuiteResult l = lambda_study(op, graph, noise, base, study, kSeed);
    const SuiteResult n = nu_study(op, graph, noise, base, study, kSeed);
    return {l.passed() && n.passed(),
            "lambda slope " + fmt(l.details.value("slope", 0.0)) + " (window [0.7, 1.3]) " +
                to_string(l.verdict) + ", max diff/(lambda+lambda') " +
                fmt(l.details.value("max_ratio_to_sum", 0.0)) + "; nu monotone decrease " +
                to_string(n.verdict)};
}

Outcome c7_dissipation() {
    auto graph = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
    bool all = true;
    std::string parts;
    for (const auto& b : backends(64)) {
        SimConfig base;
        base.T = 0.5;
        base.steps = 256;
        base.initial = 3.0 * sine_initial(b.op.size());
        const SuiteResult r = dissipation_suite(b.op, graph, base);
        all = all && r.passed();
        int violations = 0;
        for (const auto& lv : r.details["levels"]) violations += lv.value("violations", 0);
        parts += " " + b.name + "=" + to_string(r.verdict) + "(" + std::to_string(violations) + ")";
    }
    return {all, "noise-free nu_level and lambda_level runs, violations per backend:" + parts};
}

Outcome c8_ito() {
    const auto t0 = std::chrono::steady_clock::now();
    const SuiteResult r = ito_suite(ItoSpec{}, kSeed);
    const double t = seconds_since(t0);
    std::string neg = "missing";
    for (const auto& inst : r.details["instances"])
        if (inst.value("instance", "") == "negative_control")
            neg = inst.value("verifier_passed", true) ? "passed (bad)" : "failed (expected)";
    return {r.passed() && t < 300.0, "M=1e5: " + std::string(to_string(r.verdict)) +
                                         ", negative control " + neg + ", " + fmt(t) +
                                         " s (limit 300 s)"};
}

Outcome c9_prop71() {
    const auto op = random_jump_kernel(16, 11);
    auto graph = std::make_shared<const MonotoneGraph>(MonotoneGraph::example_discontinuous(1.0));
    const DiagonalNoise noise = DiagonalNoise::eigenmodes(op, {1.0, 0.5});
    SimConfig cfg;
    cfg.level = Level::eps_level;
    cfg.T = 0.05;
    cfg.steps = 256;
    cfg.lambda = cfg.nu = cfg.eps = 0.1;
    cfg.initial = sine_initial(op.size());
    const SuiteResult r = prop71_suite(op, graph, noise, cfg, 200, kSeed);
    const auto& d = r.details;
    return {r.passed(), "two-mode jump kernel: lhs " + fmt(d.value("lhs", 0.0)) + " +- " +
                            fmt(d.value("lhs_se", 0.0)) + " <= bound " +
                            fmt(d.value("bound", 0.0)) + ", C3^2 " +
                            fmt(d.value("C3_squared", 0.0)) + ", C5 measured " +
                            fmt(d.value("C5_measured", 0.0)) + " (used " +
                            fmt(d.value("C5", 0.0)) + "): " + to_string(r.verdict)};
}

Outcome c10_reproducibility() {
    const fs::path root = fs::temp_directory_path() / ("spme_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    ExperimentConfig cfg = default_config();
    std::map<std::string, std::string> first;
    int compared = 0, differing = 0;
    for (int pass = 0; pass < 2; ++pass) {
        for (const char* cmd : {"verify", "converge", "ito", "simulate"}) {
            RunOptions opts;
            opts.out_dir = root / std::to_string(pass) / cmd;
            run_command(cmd, cfg, opts);
            for (const auto& e : fs::directory_iterator(opts.out_dir)) {
                const std::string key = std::string(cmd) + "/" + e.path().filename().string();
                const std::string bytes = read_file(e.path());
                if (pass == 0) {
                    first[key] = bytes;
                } else {
                    ++compared;
                    auto it = first.find(key);
                    if (it == first.end() || it->second != bytes) ++differing;
                }
            }
        }
    }
    const bool same_set = compared == static_cast<int>(first.size());
    fs::remove_all(root);
    return {same_set && differing == 0 && compared > 0,
            "all four commands twice, " + std::to_string(compared) + " files compared, " +
                std::to_string(differing) + " differ"};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"graph suite", c1_graph},          {"norm suite", c2_norms},
        {"resolvent estimates", c3_lemma41}, {"carre du champ bound", c4_h4},
        {"moment uniformity", c5_moments},  {"Cauchy in lambda and nu", c6_cauchy},
        {"dissipation", c7_dissipation},    {"Ito in expectation", c8_ito},
        {"energy bound", c9_prop71},        {"reproducibility", c10_reproducibility}};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << " [" << criteria[i].first
                  << "]: " << (o.pass ? "PASS" : "FAIL") << " - " << o.summary << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed")
              << std::endl;
    return failed == 0 ? 0 : 1;
}

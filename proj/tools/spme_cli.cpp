#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spme/errors.hpp"
#include "spme/experiment_config.hpp"
#include "spme/experiment_suites.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInternal = 3;

struct Args {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> suites;
    std::optional<double> se_multiple;
    bool record_time = false;
    bool print_config = false;
};

int run(const std::string& command, const Args& args) {
    spme::ExperimentConfig cfg =
        args.config.empty() ? spme::default_config() : spme::load_config(args.config);
    if (args.seed) cfg.seed = *args.seed;
    if (args.se_multiple) {
        if (!(*args.se_multiple > 0.0))
            throw spme::ConfigError("--se-multiple", "must be positive");
        cfg.ito.se_multiple = *args.se_multiple;
    }
    if (args.print_config) {
        std::cout << spme::config_text(cfg);
        return kExitPass;
    }

    spme::RunOptions opts;
    if (!args.out.empty()) {
        opts.out_dir = args.out;
    } else if (const char* env = std::getenv("SPME_OUT_DIR"); env && *env) {
        opts.out_dir = env;
    } else {
        opts.out_dir = cfg.output_dir;
    }
    opts.suites = args.suites;
    opts.record_time = args.record_time;

    const spme::RunOutcome outcome = spme::run_command(command, cfg, opts);
    for (const auto& r : outcome.results) {
        std::cout << r.name << ": " << spme::to_string(r.verdict);
        if (!r.reason.empty()) std::cout << " (" << r.reason << ")";
        std::cout << '\n';
    }
    std::cout << "outputs: " << opts.out_dir.string() << '\n';
    return outcome.exit_code == 0 ? kExitPass : kExitFail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical laboratory for multi-valued stochastic porous media equations"};
    app.require_subcommand(1);
    Args args;

    auto add_common = [&args](CLI::App* sub) {
        sub->add_option("--config", args.config, "JSON configuration file")->check(CLI::ExistingFile);
        sub->add_option("--seed", args.seed, "Master seed (overrides the config)");
        sub->add_option("--out", args.out, "Output directory (default: $SPME_OUT_DIR, then config)");
        sub->add_option("--suite", args.suites, "Run only the named suite (repeatable)");
        sub->add_option("--se-multiple", args.se_multiple, "Standard-error multiple for Ito checks");
        sub->add_flag("--record-time", args.record_time, "Add timestamps and elapsed times to outputs");
        sub->add_flag("--print-config", args.print_config, "Print the canonical configuration and exit");
    };
    std::string command;
    for (const char* name : {"verify", "converge", "ito", "simulate"}) {
        const char* help = std::string(name) == "verify"     ? "Structural invariant suites"
                           : std::string(name) == "converge" ? "Moment and convergence studies"
                           : std::string(name) == "ito"      ? "Ito-in-expectation battery"
                                                             : "Ensemble export";
        CLI::App* sub = app.add_subcommand(name, help);
        add_common(sub);
        sub->callback([&command, name]() { command = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitPass : kExitConfig;
    }

    try {
        return run(command, args);
    } catch (const spme::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kExitInternal;
    }
}

#include <doctest.h>

#include <cmath>

#include "spme/errors.hpp"
#include "spme/experiment_config.hpp"
#include "spme/statistics.hpp"

using namespace spme;
using nlohmann::json;

namespace {

std::string field_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

}  // namespace

TEST_SUITE("experiment_cli") {
    TEST_CASE("default config round-trips") {
        const ExperimentConfig cfg = default_config();
        const std::string text = config_text(cfg);
        const ExperimentConfig back = parse_config_text(text);
        CHECK(back == cfg);
        CHECK(config_text(back) == text);
        CHECK(config_hash(back) == config_hash(cfg));
        CHECK(config_hash(cfg).size() == 16);
    }

    TEST_CASE("every operator kind round-trips") {
        for (const char* op : {
                 R"({"kind":"grid","dim":2,"sides":[4,5],"h":0.2})",
                 R"({"kind":"spectral","dim":1,"sides":[8],"h":0.1,
                     "bernstein":[{"kind":"power","weight":1,"beta":0.5},
                                  {"kind":"log1p","weight":0.5,"scale":2},
                                  {"kind":"linear","weight":0.1}]})",
                 R"({"kind":"jump_kernel","weights":[1,1],"kernel":[[0,1,1],[1,0,1]],"killing":[1,0]})",
                 R"({"kind":"sierpinski","level":2,"c":0.3,"lambda_p":0.4,"rho":0.5})"}) {
            json j = json::parse(std::string(R"({"operator":)") + op + "}");
            const ExperimentConfig cfg = parse_config(j);
            const ExperimentConfig back = parse_config_text(config_text(cfg));
            CHECK(back == cfg);
            CHECK(build_operator(back.op).size() > 0);
        }
    }

    TEST_CASE("graph presets expand to explicit segments") {
        for (const char* g : {R"({"preset":"sign"})", R"({"preset":"example_discontinuous","m":2})",
                              R"({"preset":"fast_diffusion","gamma":0.5})",
                              R"({"preset":"linear","slope":2})"}) {
            const MonotoneGraph graph = graph_from_json(json::parse(g));
            const json explicit_form = graph_to_json(graph);
            CHECK_FALSE(explicit_form.contains("preset"));
            CHECK(graph_from_json(explicit_form) == graph);
        }
    }

    TEST_CASE("invalid values name their field") {
        CHECK(field_of(R"({"simulation":{"lambda":-0.1}})") == "simulation.lambda");
        CHECK(field_of(R"({"simulation":{"steps":0}})") == "simulation.steps");
        CHECK(field_of(R"({"simulation":{"level":"bogus"}})") == "simulation.level");
        CHECK(field_of(R"({"operator":{"kind":"grid","sides":[4],"h":0.2,"bogus":1}})") ==
              "operator.bogus");
        CHECK(field_of(R"({"unknown_key":1})") == "unknown_key");
        CHECK(field_of(R"({"suites":["nope"]})") == "suites[0]");
        CHECK(field_of(R"({"schema_version":2})") == "schema_version");
        CHECK(field_of(R"({"graph":{"preset":"nope"}})") == "graph.preset");
        CHECK(field_of(R"({"seed":-3})") == "seed");
        CHECK(field_of(R"({"simulation":{"T":1.0,"steps":10}})") == "simulation.steps");
        CHECK_THROWS_AS(parse_config_text("{not json"), ConfigError);
    }

    TEST_CASE("build helpers") {
        ExperimentConfig cfg = default_config();
        cfg.op.sides = {8};
        cfg.op.h = 1.0 / 9.0;
        const auto op = build_operator(cfg.op);
        CHECK(op.size() == 8);
        const DiagonalNoise noise = build_noise(cfg.noise, op);
        CHECK(noise.truncation() == 2);
        const State x = build_initial(cfg.simulation.initial, 8);
        CHECK(x(0) == doctest::Approx(std::sin(M_PI / 9) + 0.5 * std::sin(3 * M_PI / 9)));
        const SimConfig sc = build_sim_config(cfg.simulation, 8);
        CHECK(sc.level == Level::eps_level);
        CHECK(sc.steps == cfg.simulation.steps);
    }

    TEST_CASE("statistics helpers") {
        const MeanSe m = mean_se({1.0, 2.0, 3.0});
        CHECK(m.mean == doctest::Approx(2.0));
        CHECK(m.se == doctest::Approx(1.0 / std::sqrt(3.0)));
        CHECK(mean_se({5.0}).se == 0.0);
        const LineFit f = loglog_fit({1, 2, 4}, {3, 12, 48});
        CHECK(f.slope == doctest::Approx(2.0));
        CHECK(csv_field("a,b") == "\"a,b\"");
        CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
        CHECK(csv_field("plain") == "plain");
        CHECK(format_number(0.1) == "0.1");
        CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
    }
}

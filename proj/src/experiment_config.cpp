#include "spme/experiment_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "spme/errors.hpp"

namespace spme {

using nlohmann::json;

namespace {

const std::set<std::string> kSuiteNames{"graph",  "norms",  "lemma41", "h4",  "noise",
                                        "dissipation", "prop71", "moments", "lambda",
                                        "nu",     "eps",    "ito",     "simulate"};

/// Object reader that tracks its JSON path and rejects unknown keys.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double def) {
        if (!has(key)) return def;
        return as_number(raw(key), field(key));
    }

    int integer(const std::string& key, int def) {
        if (!has(key)) return def;
        return as_int(raw(key), field(key));
    }

    bool boolean(const std::string& key, bool def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key, const std::string& def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_string()) throw ConfigError(field(key), "expected a string");
        return v.get<std::string>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(as_number(v[i], field(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<int> integers(const std::string& key, std::vector<int> def) {
        if (!has(key)) return def;
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(field(key), "expected an array of integers");
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out.push_back(as_int(v[i], field(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError(path, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
        return d;
    }

    static int as_int(const json& v, const std::string& path) {
        if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
        const auto i = v.get<long long>();
        if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
            throw ConfigError(path, "integer out of range");
        return static_cast<int>(i);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) throw ConfigError(path, what);
}

bool in_open_unit(double x) { return x > 0.0 && x < 1.0; }

double end_from_json(const json& v, const std::string& path, double inf) {
    if (v.is_null()) return inf;
    return Reader::as_number(v, path);
}

json end_to_json(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

const char* bernstein_name(Bernstein::Kind k) {
    switch (k) {
        case Bernstein::Kind::power: return "power";
        case Bernstein::Kind::log1p: return "log1p";
        case Bernstein::Kind::linear: return "linear";
    }
    return "unknown";
}

Piece piece_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    const std::string kind = r.string("kind", "");
    Piece p = Piece::constant(0.0);
    if (kind == "power") {
        p = Piece::power(r.number("exponent", 1.0), r.number("coeff", 1.0),
                         r.number("center", 0.0), r.number("offset", 0.0));
    } else if (kind == "linear") {
        p = Piece::linear(r.number("slope", 1.0), r.number("offset", 0.0));
    } else if (kind == "constant") {
        p = Piece::constant(r.number("value", 0.0));
    } else {
        throw ConfigError(r.field("kind"), "expected power, linear or constant");
    }
    r.finish();
    return p;
}

json piece_to_json(const Piece& p) {
    switch (p.kind()) {
        case Piece::Kind::power:
            return {{"kind", "power"}, {"exponent", p.exponent()}, {"coeff", p.coeff()},
                    {"center", p.center()}, {"offset", p.offset()}};
        case Piece::Kind::linear:
            return {{"kind", "linear"}, {"slope", p.coeff()}, {"offset", p.offset()}};
        case Piece::Kind::constant:
            return {{"kind", "constant"}, {"value", p.offset()}};
    }
    return {};
}

OperatorSpec operator_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    OperatorSpec s;
    s.kind = r.string("kind", s.kind);
    if (s.kind == "grid" || s.kind == "spectral") {
        s.dim = r.integer("dim", 1);
        require(s.dim == 1 || s.dim == 2, r.field("dim"), "must be 1 or 2");
        s.sides = r.integers("sides", s.dim == 1 ? std::vector<int>{64} : std::vector<int>{16, 16});
        require(s.sides.size() == static_cast<std::size_t>(s.dim), r.field("sides"),
                "needs one entry per dimension");
        for (int n : s.sides) require(n >= 1, r.field("sides"), "entries must be >= 1");
        s.h = r.number("h", 1.0 / (s.sides[0] + 1));
        require(s.h > 0.0, r.field("h"), "must be positive");
        if (s.kind == "spectral") {
            require(r.has("bernstein"), r.field("bernstein"), "required for spectral operators");
            const json& terms = r.raw("bernstein");
            require(terms.is_array() && !terms.empty(), r.field("bernstein"),
                    "expected a non-empty array of terms");
            for (std::size_t i = 0; i < terms.size(); ++i) {
                const std::string tp = r.field("bernstein") + "[" + std::to_string(i) + "]";
                Reader t(terms[i], tp);
                const std::string kind = t.string("kind", "");
                Bernstein::Term term{Bernstein::Kind::linear, t.number("weight", 1.0), 0.0};
                require(term.weight >= 0.0, t.field("weight"), "must be non-negative");
                if (kind == "power") {
                    term.kind = Bernstein::Kind::power;
                    term.param = t.number("beta", 0.5);
                    require(term.param > 0.0 && term.param <= 1.0, t.field("beta"),
                            "must lie in (0, 1]");
                } else if (kind == "log1p") {
                    term.kind = Bernstein::Kind::log1p;
                    term.param = t.number("scale", 1.0);
                    require(term.param > 0.0, t.field("scale"), "must be positive");
                } else if (kind != "linear") {
                    throw ConfigError(t.field("kind"), "expected power, log1p or linear");
                }
                t.finish();
                s.bernstein.push_back(term);
            }
        }
    } else if (s.kind == "jump_kernel") {
        s.weights = r.numbers("weights", {});
        const std::size_t n = s.weights.size();
        require(n >= 1, r.field("weights"), "needs at least one point");
        for (double w : s.weights) require(w > 0.0, r.field("weights"), "must be positive");
        s.killing = r.numbers("killing", std::vector<double>(n, 0.0));
        require(s.killing.size() == n, r.field("killing"), "needs one entry per point");
        for (double k : s.killing) require(k >= 0.0, r.field("killing"), "must be non-negative");
        if (r.has("kernel")) {
            const json& ks = r.raw("kernel");
            require(ks.is_array(), r.field("kernel"), "expected an array of [i, j, J] triples");
            for (std::size_t e = 0; e < ks.size(); ++e) {
                const std::string ep = r.field("kernel") + "[" + std::to_string(e) + "]";
                require(ks[e].is_array() && ks[e].size() == 3, ep, "expected [i, j, J]");
                const int i = Reader::as_int(ks[e][0], ep + "[0]");
                const int jj = Reader::as_int(ks[e][1], ep + "[1]");
                const double v = Reader::as_number(ks[e][2], ep + "[2]");
                require(i >= 0 && static_cast<std::size_t>(i) < n, ep + "[0]", "index out of range");
                require(jj >= 0 && static_cast<std::size_t>(jj) < n, ep + "[1]",
                        "index out of range");
                require(v >= 0.0, ep + "[2]", "must be non-negative");
                s.kernel.push_back(
                    {static_cast<std::size_t>(i), static_cast<std::size_t>(jj), v});
            }
        }
        s.allow_recurrent = r.boolean("allow_recurrent", false);
    } else if (s.kind == "sierpinski") {
        s.level = r.integer("level", 3);
        require(s.level >= 1 && s.level <= 8, r.field("level"), "must lie in [1, 8]");
        s.c = r.number("c", 0.2);
        s.lambda_p = r.number("lambda_p", 0.5);
        require(in_open_unit(s.lambda_p), r.field("lambda_p"), "must lie in (0, 1)");
        require(s.c > 0.0 && s.c < s.lambda_p, r.field("c"), "must lie in (0, lambda_p)");
        s.rho = r.number("rho", 1.0);
        require(s.rho > 0.0, r.field("rho"), "must be positive");
    } else {
        throw ConfigError(r.field("kind"), "expected grid, spectral, jump_kernel or sierpinski");
    }
    r.finish();
    return s;
}

json operator_to_json(const OperatorSpec& s) {
    json j{{"kind", s.kind}};
    if (s.kind == "grid" || s.kind == "spectral") {
        j["dim"] = s.dim;
        j["sides"] = s.sides;
        j["h"] = s.h;
        if (s.kind == "spectral") {
            json terms = json::array();
            for (const auto& t : s.bernstein) {
                json tj{{"kind", bernstein_name(t.kind)}, {"weight", t.weight}};
                if (t.kind == Bernstein::Kind::power) tj["beta"] = t.param;
                if (t.kind == Bernstein::Kind::log1p) tj["scale"] = t.param;
                terms.push_back(tj);
            }
            j["bernstein"] = terms;
        }
    } else if (s.kind == "jump_kernel") {
        j["weights"] = s.weights;
        j["killing"] = s.killing;
        json ks = json::array();
        for (const auto& e : s.kernel) ks.push_back(json::array({e.i, e.j, e.value}));
        j["kernel"] = ks;
        j["allow_recurrent"] = s.allow_recurrent;
    } else if (s.kind == "sierpinski") {
        j["level"] = s.level;
        j["c"] = s.c;
        j["lambda_p"] = s.lambda_p;
        j["rho"] = s.rho;
    }
    return j;
}

NoiseSpec noise_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    NoiseSpec s;
    s.kind = r.string("kind", s.kind);
    require(s.kind == "none" || s.kind == "constant" || s.kind == "indicators" ||
                s.kind == "eigenmodes",
            r.field("kind"), "expected none, constant, indicators or eigenmodes");
    s.coeffs = r.numbers("coeffs", s.kind == "none" ? std::vector<double>{} : s.coeffs);
    for (double c : s.coeffs) require(c > 0.0, r.field("coeffs"), "must be positive");
    if (s.kind == "none") require(s.coeffs.empty(), r.field("coeffs"), "must be empty");
    if (s.kind == "constant") require(s.coeffs.size() == 1, r.field("coeffs"), "needs one entry");
    if (s.kind != "none") require(!s.coeffs.empty(), r.field("coeffs"), "must not be empty");
    if (s.kind == "indicators") {
        require(r.has("sets"), r.field("sets"), "required for indicator noise");
        const json& sets = r.raw("sets");
        require(sets.is_array() && sets.size() == s.coeffs.size(), r.field("sets"),
                "needs one index set per coefficient");
        for (std::size_t k = 0; k < sets.size(); ++k) {
            const std::string sp = r.field("sets") + "[" + std::to_string(k) + "]";
            require(sets[k].is_array() && !sets[k].empty(), sp, "expected a non-empty index array");
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < sets[k].size(); ++i) {
                const int v = Reader::as_int(sets[k][i], sp + "[" + std::to_string(i) + "]");
                require(v >= 0, sp, "indices must be non-negative");
                idx.push_back(static_cast<std::size_t>(v));
            }
            s.sets.push_back(idx);
        }
    }
    r.finish();
    return s;
}

json noise_to_json(const NoiseSpec& s) {
    json j{{"kind", s.kind}, {"coeffs", s.coeffs}};
    if (s.kind == "indicators") j["sets"] = s.sets;
    return j;
}

InitialSpec initial_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    InitialSpec s;
    s.kind = r.string("kind", s.kind);
    if (s.kind == "sine" || s.kind == "constant") {
        s.amplitude = r.number("amplitude", 1.0);
    } else if (s.kind == "values") {
        s.values = r.numbers("values", {});
        require(!s.values.empty(), r.field("values"), "must not be empty");
    } else {
        throw ConfigError(r.field("kind"), "expected sine, constant or values");
    }
    r.finish();
    return s;
}

json initial_to_json(const InitialSpec& s) {
    json j{{"kind", s.kind}};
    if (s.kind == "values")
        j["values"] = s.values;
    else
        j["amplitude"] = s.amplitude;
    return j;
}

SimulationSpec simulation_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    SimulationSpec s;
    s.T = r.number("T", s.T);
    require(s.T > 0.0, r.field("T"), "must be positive");
    s.steps = r.integer("steps", s.steps);
    require(s.steps >= 1, r.field("steps"), "must be >= 1");
    s.level = r.string("level", s.level);
    require(s.level == "eps_level" || s.level == "nu_level" || s.level == "lambda_level",
            r.field("level"), "expected eps_level, nu_level or lambda_level");
    s.lambda = r.number("lambda", s.lambda);
    require(in_open_unit(s.lambda), r.field("lambda"), "must lie in (0, 1)");
    s.nu = r.number("nu", s.nu);
    require(s.nu > 0.0 && s.nu <= 1.0, r.field("nu"), "must lie in (0, 1]");
    s.eps = r.number("eps", s.eps);
    require(in_open_unit(s.eps), r.field("eps"), "must lie in (0, 1)");
    s.m = r.number("m", s.m);
    require(s.m >= 1.0, r.field("m"), "must be >= 1");
    s.nu0 = r.number("nu0", s.nu0);
    require(s.nu0 > 0.0, r.field("nu0"), "must be positive");
    s.samples = r.integer("samples", s.samples);
    require(s.samples >= 1, r.field("samples"), "must be >= 1");
    if (r.has("initial")) s.initial = initial_from_json(r.raw("initial"), r.field("initial"));
    r.finish();
    return s;
}

json simulation_to_json(const SimulationSpec& s) {
    return {{"T", s.T},         {"steps", s.steps}, {"level", s.level},
            {"lambda", s.lambda}, {"nu", s.nu},     {"eps", s.eps},
            {"m", s.m},         {"nu0", s.nu0},     {"samples", s.samples},
            {"initial", initial_to_json(s.initial)}};
}

std::vector<double> unit_grid(Reader& r, const std::string& key, std::vector<double> def) {
    std::vector<double> g = r.numbers(key, std::move(def));
    require(!g.empty(), r.field(key), "must not be empty");
    for (double v : g) require(in_open_unit(v), r.field(key), "entries must lie in (0, 1)");
    return g;
}

StudySpec study_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    StudySpec s;
    s.lambda_grid = unit_grid(r, "lambda_grid", s.lambda_grid);
    s.nu_grid = unit_grid(r, "nu_grid", s.nu_grid);
    s.eps_grid = unit_grid(r, "eps_grid", s.eps_grid);
    s.T = r.number("T", s.T);
    require(s.T > 0.0, r.field("T"), "must be positive");
    s.steps = r.integer("steps", s.steps);
    require(s.steps >= 1, r.field("steps"), "must be >= 1");
    s.samples = r.integer("samples", s.samples);
    require(s.samples >= 2, r.field("samples"), "must be >= 2");
    s.slope_lo = r.number("slope_lo", s.slope_lo);
    s.slope_hi = r.number("slope_hi", s.slope_hi);
    require(s.slope_lo < s.slope_hi, r.field("slope_hi"), "must exceed slope_lo");
    r.finish();
    return s;
}

json study_to_json(const StudySpec& s) {
    return {{"lambda_grid", s.lambda_grid}, {"nu_grid", s.nu_grid}, {"eps_grid", s.eps_grid},
            {"T", s.T}, {"steps", s.steps}, {"samples", s.samples},
            {"slope_lo", s.slope_lo}, {"slope_hi", s.slope_hi}};
}

VerifySpec verify_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    VerifySpec s;
    auto count = [&r](const char* key, int def) {
        const int v = r.integer(key, def);
        require(v >= 2, r.field(key), "must be >= 2");
        return v;
    };
    s.graph_triples = count("graph_triples", s.graph_triples);
    s.functionals = count("functionals", s.functionals);
    s.lemma41_trials = count("lemma41_trials", s.lemma41_trials);
    s.h4_pairs = count("h4_pairs", s.h4_pairs);
    s.prop71_samples = count("prop71_samples", s.prop71_samples);
    s.lemma41_grid = unit_grid(r, "lemma41_grid", s.lemma41_grid);
    s.p_list = r.numbers("p_list", s.p_list);
    require(!s.p_list.empty(), r.field("p_list"), "must not be empty");
    for (double p : s.p_list) require(p >= 2.0, r.field("p_list"), "entries must be >= 2");
    s.noise_nu_grid = r.numbers("noise_nu_grid", s.noise_nu_grid);
    require(!s.noise_nu_grid.empty(), r.field("noise_nu_grid"), "must not be empty");
    for (double v : s.noise_nu_grid) require(v > 0.0, r.field("noise_nu_grid"), "must be positive");
    r.finish();
    return s;
}

json verify_to_json(const VerifySpec& s) {
    return {{"graph_triples", s.graph_triples}, {"functionals", s.functionals},
            {"lemma41_trials", s.lemma41_trials}, {"lemma41_grid", s.lemma41_grid},
            {"p_list", s.p_list}, {"h4_pairs", s.h4_pairs},
            {"noise_nu_grid", s.noise_nu_grid}, {"prop71_samples", s.prop71_samples}};
}

ItoSpec ito_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    ItoSpec s;
    s.samples = r.integer("samples", s.samples);
    require(s.samples >= 2, r.field("samples"), "must be >= 2");
    s.quad_nodes = r.integer("quad_nodes", s.quad_nodes);
    require(s.quad_nodes >= 2, r.field("quad_nodes"), "must be >= 2");
    s.se_multiple = r.number("se_multiple", s.se_multiple);
    require(s.se_multiple > 0.0, r.field("se_multiple"), "must be positive");
    s.negative_control_scale = r.number("negative_control_scale", s.negative_control_scale);
    require(s.negative_control_scale > 0.0 && s.negative_control_scale != 1.0,
            r.field("negative_control_scale"), "must be positive and different from 1");
    r.finish();
    return s;
}

json ito_to_json(const ItoSpec& s) {
    return {{"samples", s.samples}, {"quad_nodes", s.quad_nodes},
            {"se_multiple", s.se_multiple}, {"negative_control_scale", s.negative_control_scale}};
}

std::size_t operator_size(const OperatorSpec& s) {
    if (s.kind == "grid" || s.kind == "spectral") {
        std::size_t n = 1;
        for (int k : s.sides) n *= static_cast<std::size_t>(k);
        return n;
    }
    if (s.kind == "jump_kernel") return s.weights.size();
    std::size_t n = 0, layer = 1;
    for (int l = 0; l <= s.level; ++l, layer *= 3) n += layer;
    return n;
}

}  // namespace

bool OperatorSpec::operator==(const OperatorSpec& o) const {
    auto same_terms = [](const std::vector<Bernstein::Term>& a,
                         const std::vector<Bernstein::Term>& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].kind != b[i].kind || a[i].weight != b[i].weight || a[i].param != b[i].param)
                return false;
        return true;
    };
    return kind == o.kind && dim == o.dim && sides == o.sides && h == o.h &&
           same_terms(bernstein, o.bernstein) && weights == o.weights && kernel == o.kernel &&
           killing == o.killing && allow_recurrent == o.allow_recurrent && level == o.level &&
           c == o.c && lambda_p == o.lambda_p && rho == o.rho;
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    const bool same_graph = (!graph && !o.graph) || (graph && o.graph && *graph == *o.graph);
    return schema_version == o.schema_version && seed == o.seed && output_dir == o.output_dir &&
           suites == o.suites && op == o.op && same_graph && noise == o.noise &&
           simulation == o.simulation && study == o.study && verify == o.verify && ito == o.ito;
}

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.graph = std::make_shared<const MonotoneGraph>(MonotoneGraph::sign());
    return cfg;
}

json graph_to_json(const MonotoneGraph& g) {
    json segs = json::array();
    for (const auto& s : g.segments())
        segs.push_back({{"from", end_to_json(s.from)}, {"to", end_to_json(s.to)},
                        {"piece", piece_to_json(s.piece)}});
    json jumps = json::array();
    for (const auto& jp : g.jumps())
        jumps.push_back({{"at", jp.at}, {"lo", jp.values.lo}, {"hi", jp.values.hi}});
    return {{"segments", segs}, {"jumps", jumps}, {"growth_m", g.growth_m()},
            {"growth_C", g.growth_C()}};
}

MonotoneGraph graph_from_json(const json& j, const std::string& path) {
    Reader r(j, path);
    const double inf = std::numeric_limits<double>::infinity();
    try {
        if (r.has("preset")) {
            const std::string preset = r.string("preset", "");
            if (preset == "sign") {
                r.finish();
                return MonotoneGraph::sign();
            }
            if (preset == "example_discontinuous") {
                const double m = r.number("m", 1.0);
                require(m >= 1.0, r.field("m"), "must be >= 1");
                r.finish();
                return MonotoneGraph::example_discontinuous(m);
            }
            if (preset == "fast_diffusion") {
                const double gamma = r.number("gamma", 0.5);
                require(gamma >= 0.0 && gamma <= 1.0, r.field("gamma"), "must lie in [0, 1]");
                r.finish();
                return MonotoneGraph::fast_diffusion(gamma);
            }
            if (preset == "linear") {
                const double slope = r.number("slope", 1.0);
                require(slope >= 0.0, r.field("slope"), "must be non-negative");
                r.finish();
                return MonotoneGraph::linear(slope);
            }
            throw ConfigError(r.field("preset"),
                              "expected sign, example_discontinuous, fast_diffusion or linear");
        }
        require(r.has("segments"), r.field("segments"), "required without a preset");
        const json& segs = r.raw("segments");
        require(segs.is_array() && !segs.empty(), r.field("segments"),
                "expected a non-empty array");
        std::vector<GraphSegment> segments;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const std::string sp = r.field("segments") + "[" + std::to_string(i) + "]";
            Reader s(segs[i], sp);
            GraphSegment seg;
            require(s.has("from") && s.has("to") && s.has("piece"), sp,
                    "needs from, to and piece");
            seg.from = end_from_json(s.raw("from"), s.field("from"), -inf);
            seg.to = end_from_json(s.raw("to"), s.field("to"), inf);
            seg.piece = piece_from_json(s.raw("piece"), s.field("piece"));
            s.finish();
            segments.push_back(seg);
        }
        std::vector<Jump> jumps;
        if (r.has("jumps")) {
            const json& js = r.raw("jumps");
            require(js.is_array(), r.field("jumps"), "expected an array");
            for (std::size_t i = 0; i < js.size(); ++i) {
                Reader jr(js[i], r.field("jumps") + "[" + std::to_string(i) + "]");
                Jump jp;
                jp.at = jr.number("at", 0.0);
                jp.values.lo = jr.number("lo", 0.0);
                jp.values.hi = jr.number("hi", 0.0);
                require(jp.values.lo <= jp.values.hi, jr.field("hi"), "must be >= lo");
                jr.finish();
                jumps.push_back(jp);
            }
        }
        const double gm = r.number("growth_m", 1.0);
        const double gc = r.number("growth_C", 1.0);
        r.finish();
        return MonotoneGraph(std::move(segments), std::move(jumps), gm, gc);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
}

ExperimentConfig parse_config(const json& j) {
    Reader r(j, "");
    ExperimentConfig cfg = default_config();
    cfg.schema_version = r.integer("schema_version", kConfigSchemaVersion);
    require(cfg.schema_version == kConfigSchemaVersion, "schema_version",
            "unsupported schema version " + std::to_string(cfg.schema_version));
    if (r.has("seed")) {
        const json& s = r.raw("seed");
        require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0),
                "seed", "expected a non-negative integer");
        cfg.seed = s.get<std::uint64_t>();
    }
    cfg.output_dir = r.string("output_dir", cfg.output_dir);
    if (r.has("suites")) {
        const json& s = r.raw("suites");
        require(s.is_array(), "suites", "expected an array of suite names");
        for (std::size_t i = 0; i < s.size(); ++i) {
            const std::string sp = "suites[" + std::to_string(i) + "]";
            require(s[i].is_string(), sp, "expected a string");
            const auto name = s[i].get<std::string>();
            require(kSuiteNames.count(name) > 0, sp, "unknown suite '" + name + "'");
            cfg.suites.push_back(name);
        }
    }
    if (r.has("operator")) cfg.op = operator_from_json(r.raw("operator"), "operator");
    if (r.has("graph"))
        cfg.graph = std::make_shared<const MonotoneGraph>(graph_from_json(r.raw("graph"), "graph"));
    if (r.has("noise")) cfg.noise = noise_from_json(r.raw("noise"), "noise");
    if (r.has("simulation"))
        cfg.simulation = simulation_from_json(r.raw("simulation"), "simulation");
    if (r.has("study")) cfg.study = study_from_json(r.raw("study"), "study");
    if (r.has("verify")) cfg.verify = verify_from_json(r.raw("verify"), "verify");
    if (r.has("ito")) cfg.ito = ito_from_json(r.raw("ito"), "ito");
    r.finish();

    const std::size_t n = operator_size(cfg.op);
    if (cfg.simulation.initial.kind == "values")
        require(cfg.simulation.initial.values.size() == n, "simulation.initial.values",
                "needs one entry per point (" + std::to_string(n) + ")");
    for (std::size_t k = 0; k < cfg.noise.sets.size(); ++k)
        for (std::size_t i : cfg.noise.sets[k])
            require(i < n, "noise.sets[" + std::to_string(k) + "]", "index out of range");
    if (cfg.noise.kind == "eigenmodes")
        require(cfg.noise.coeffs.size() <= n, "noise.coeffs", "more modes than points");
    const SimulationSpec& sim = cfg.simulation;
    if (sim.level == "eps_level")
        require(sim.T / sim.steps <= sim.eps / 4.0, "simulation.steps",
                "explicit eps_level steps need T/steps <= eps/4");
    return cfg;
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(j);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

json serialize_config(const ExperimentConfig& cfg) {
    json j{{"schema_version", cfg.schema_version},
           {"seed", cfg.seed},
           {"output_dir", cfg.output_dir},
           {"suites", cfg.suites},
           {"operator", operator_to_json(cfg.op)},
           {"noise", noise_to_json(cfg.noise)},
           {"simulation", simulation_to_json(cfg.simulation)},
           {"study", study_to_json(cfg.study)},
           {"verify", verify_to_json(cfg.verify)},
           {"ito", ito_to_json(cfg.ito)}};
    j["graph"] = cfg.graph ? graph_to_json(*cfg.graph) : graph_to_json(MonotoneGraph::sign());
    return j;
}

std::string config_text(const ExperimentConfig& cfg) {
    return serialize_config(cfg).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_text(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    return out;
}

DirichletOperator build_operator(const OperatorSpec& s) {
    if (s.kind == "grid") return build_grid_dirichlet(s.dim, s.sides, s.h);
    if (s.kind == "spectral")
        return build_spectral_function(build_grid_dirichlet(s.dim, s.sides, s.h),
                                       Bernstein(s.bernstein));
    if (s.kind == "sierpinski") return build_sierpinski(s.level, s.c, s.lambda_p, s.rho);
    if (s.kind == "jump_kernel") {
        const auto n = static_cast<Eigen::Index>(s.weights.size());
        std::vector<Eigen::Triplet<double>> trips;
        for (const auto& e : s.kernel)
            trips.emplace_back(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j),
                               e.value);
        SparseMatrix J(n, n);
        J.setFromTriplets(trips.begin(), trips.end());
        MeasureSpace space(Eigen::Map<const State>(s.weights.data(), n), {});
        return build_jump_kernel(space, J, Eigen::Map<const State>(s.killing.data(), n),
                                 s.allow_recurrent);
    }
    throw ConfigError("operator.kind", "unknown operator kind '" + s.kind + "'");
}

DiagonalNoise build_noise(const NoiseSpec& s, const DirichletOperator& op) {
    if (s.kind == "none") return DiagonalNoise::none(op.space());
    if (s.kind == "constant") return DiagonalNoise::constant(op.space(), s.coeffs.at(0));
    if (s.kind == "indicators") return DiagonalNoise::indicators(op.space(), s.sets, s.coeffs);
    return DiagonalNoise::eigenmodes(op, s.coeffs);
}

State build_initial(const InitialSpec& s, std::size_t n) {
    State x(static_cast<Eigen::Index>(n));
    const double pi = std::acos(-1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (i + 1.0) / (n + 1.0);
        const auto I = static_cast<Eigen::Index>(i);
        if (s.kind == "sine")
            x[I] = s.amplitude * (std::sin(pi * t) + 0.5 * std::sin(3.0 * pi * t));
        else if (s.kind == "constant")
            x[I] = s.amplitude;
        else
            x[I] = s.values.at(i);
    }
    return x;
}

SimConfig build_sim_config(const SimulationSpec& s, std::size_t n) {
    SimConfig c;
    c.T = s.T;
    c.steps = s.steps;
    c.level = level_from_string(s.level);
    c.lambda = s.lambda;
    c.nu = s.nu;
    c.eps = s.eps;
    c.m = s.m;
    c.nu0 = s.nu0;
    c.initial = build_initial(s.initial, n);
    return c;
}

}  // namespace spme

#pragma once

// Experiment configuration: a YAML mapping, validated with line-numbered
// diagnostics. Grammar in README.md.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include <spingap/edgeworth.hpp>
#include <spingap/potential.hpp>
#include <spingap/sampler.hpp>

namespace spingap::cli {

struct ConfigError : std::runtime_error {
    int line;   // 1-based, 0 when unknown
    ConfigError(int l, const std::string& msg)
        : std::runtime_error(l > 0 ? "line " + std::to_string(l) + ": " + msg : msg), line(l) {}
};

struct ExperimentConfig {
    std::string kind;                   // subcommand name
    PotentialSpec potential = gaussian_potential();
    std::vector<double> rho{0.0};
    std::vector<int> n;
    std::vector<int> l;
    int d = 1;
    int resolution = 0;                 // 0: module default
    double b = kDefaultB;
    EdgeworthVariant variant = EdgeworthVariant::verbatim;
    int n_max = 3;
    std::vector<double> mcmc_rho;
    std::vector<double> tail_t;
    bool mcmc = false;                  // compare: allow Monte Carlo gamma for N >= 4
    SamplerConfig sampler;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "csv";
    std::string samples_out;            // sample: optional SPGS file
    int threads = 1;
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

template <class T>
T scalar(const YAML::Node& n, const std::string& what) {
    if (!n.IsScalar()) throw ConfigError(line_of(n), what + " must be a scalar");
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(line_of(n), what + " has the wrong type");
    }
}

inline void check_keys(const YAML::Node& map, const std::set<std::string>& allowed, const std::string& where) {
    if (!map.IsMap()) throw ConfigError(line_of(map), where + " must be a mapping");
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw ConfigError(line_of(kv.first), "unknown key '" + key + "' in " + where);
    }
}

/// A list, or {from, to, points} for an inclusive uniform grid.
inline std::vector<double> real_grid(const YAML::Node& n, const std::string& what) {
    std::vector<double> out;
    if (n.IsSequence()) {
        for (const auto& v : n) out.push_back(scalar<double>(v, what + " entry"));
    } else if (n.IsMap()) {
        check_keys(n, {"from", "to", "points"}, what);
        if (!n["from"] || !n["to"] || !n["points"]) throw ConfigError(line_of(n), what + " range needs from, to and points");
        const double a = scalar<double>(n["from"], what + ".from");
        const double b = scalar<double>(n["to"], what + ".to");
        const int p = scalar<int>(n["points"], what + ".points");
        if (p < 0) throw ConfigError(line_of(n["points"]), what + ".points must be >= 0");
        for (int i = 0; i < p; ++i) out.push_back(p == 1 ? a : a + (b - a) * i / (p - 1));
    } else {
        out.push_back(scalar<double>(n, what));
    }
    return out;
}

inline std::vector<int> int_list(const YAML::Node& n, const std::string& what) {
    std::vector<int> out;
    if (n.IsSequence()) {
        for (const auto& v : n) out.push_back(scalar<int>(v, what + " entry"));
    } else {
        out.push_back(scalar<int>(n, what));
    }
    return out;
}

inline PotentialSpec parse_potential(const YAML::Node& n) {
    check_keys(n, {"family", "a", "b", "coeffs", "alpha", "eps", "perturbation"}, "potential");
    if (!n["family"]) throw ConfigError(line_of(n), "potential.family missing");
    const auto family = scalar<std::string>(n["family"], "potential.family");
    const auto get = [&](const char* key, double dflt) {
        return n[key] ? scalar<double>(n[key], std::string("potential.") + key) : dflt;
    };
    ConvexPart phi;
    if (family == "quadratic") {
        phi = Quadratic{get("a", 0.5)};
    } else if (family == "quartic") {
        phi = Quartic{get("a", 0.5), get("b", 1.0 / 12.0)};
    } else if (family == "polynomial") {
        if (!n["coeffs"] || !n["coeffs"].IsSequence()) throw ConfigError(line_of(n), "polynomial needs a coeffs list");
        Polynomial p;
        for (const auto& c : n["coeffs"]) p.coeffs.push_back(scalar<double>(c, "coeffs entry"));
        phi = p;
    } else if (family == "smoothed_power") {
        phi = SmoothedPower{get("alpha", 0.5), get("eps", 0.1)};
    } else {
        throw ConfigError(line_of(n["family"]), "unknown potential family '" + family + "'");
    }
    Perturbation psi = NoPerturbation{};
    if (const YAML::Node p = n["perturbation"]) {
        check_keys(p, {"type", "amplitude", "omega", "center", "width"}, "perturbation");
        const auto type = p["type"] ? scalar<std::string>(p["type"], "perturbation.type") : std::string("none");
        const auto pget = [&](const char* key, double dflt) {
            return p[key] ? scalar<double>(p[key], std::string("perturbation.") + key) : dflt;
        };
        if (type == "cosine") psi = Cosine{pget("amplitude", 0.3), pget("omega", 1.0)};
        else if (type == "bump") psi = Bump{pget("amplitude", 0.3), pget("center", 0.0), pget("width", 1.0)};
        else if (type != "none") throw ConfigError(line_of(p["type"]), "unknown perturbation type '" + type + "'");
    }
    try {
        PotentialSpec pot = make_potential(phi, psi);
        if (const auto* q = std::get_if<Quadratic>(&pot.phi); q && !(q->a > 0.0))
            throw ConfigError(line_of(n), "quadratic a must be positive");
        return pot;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(line_of(n), e.what());
    }
}

inline void parse_sampler(const YAML::Node& n, SamplerConfig& s) {
    check_keys(n, {"steps", "burn_in", "thin", "chains", "grid_points", "log_drop", "reproject_every", "batches", "bootstrap"},
               "sampler");
    if (n["steps"]) s.steps = scalar<std::uint64_t>(n["steps"], "sampler.steps");
    if (n["burn_in"]) s.burn_in = scalar<std::uint64_t>(n["burn_in"], "sampler.burn_in");
    if (n["thin"]) s.thin = scalar<std::uint64_t>(n["thin"], "sampler.thin");
    if (n["chains"]) s.chains = scalar<int>(n["chains"], "sampler.chains");
    if (n["grid_points"]) s.grid_points = scalar<int>(n["grid_points"], "sampler.grid_points");
    if (n["log_drop"]) s.log_drop = scalar<double>(n["log_drop"], "sampler.log_drop");
    if (n["reproject_every"]) s.reproject_every = scalar<std::uint64_t>(n["reproject_every"], "sampler.reproject_every");
    if (n["batches"]) s.batches = scalar<int>(n["batches"], "sampler.batches");
    if (n["bootstrap"]) s.bootstrap = scalar<int>(n["bootstrap"], "sampler.bootstrap");
    if (s.chains < 1) throw ConfigError(line_of(n), "sampler.chains must be >= 1");
    if (s.grid_points < 16) throw ConfigError(line_of(n), "sampler.grid_points must be >= 16");
    if (s.batches < 1) throw ConfigError(line_of(n), "sampler.batches must be >= 1");
}

}  // namespace detail

inline const std::set<std::string>& kinds() {
    static const std::set<std::string> k{"tilt", "clt", "kop", "gap", "recursion", "paths", "compare", "sample"};
    return k;
}

/// Command-line values that take precedence over the file.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> format;
    std::optional<std::string> out;
};

/// Parses YAML text for the given subcommand and validates grids.
inline ExperimentConfig parse_config(const std::string& text, const std::string& kind, const Overrides& ov = {}) {
    if (!kinds().count(kind)) throw ConfigError(0, "unknown experiment kind '" + kind + "'");
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.mark.line + 1, e.msg);
    }
    ExperimentConfig c;
    c.kind = kind;
    if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    using namespace detail;
    check_keys(root, {"experiment", "potential", "rho", "n", "l", "d", "resolution", "b", "variant", "n_max", "mcmc_rho",
                      "mcmc", "tail_t", "sampler", "seed", "out", "format", "samples_out", "threads"},
               "config");
    if (root["experiment"]) {
        const auto e = scalar<std::string>(root["experiment"], "experiment");
        if (e != kind) throw ConfigError(line_of(root["experiment"]), "config is for '" + e + "', not '" + kind + "'");
    }
    if (root["potential"]) c.potential = parse_potential(root["potential"]);
    if (root["rho"]) {
        c.rho = real_grid(root["rho"], "rho");
        if (c.rho.empty()) throw ConfigError(line_of(root["rho"]), "rho grid empty");
    }
    if (root["n"]) {
        c.n = int_list(root["n"], "n");
        if (c.n.empty()) throw ConfigError(line_of(root["n"]), "n list empty");
    }
    if (root["l"]) {
        c.l = int_list(root["l"], "l");
        if (c.l.empty()) throw ConfigError(line_of(root["l"]), "l list empty");
    }
    if (root["d"]) c.d = scalar<int>(root["d"], "d");
    if (root["resolution"]) c.resolution = scalar<int>(root["resolution"], "resolution");
    if (root["b"]) c.b = scalar<double>(root["b"], "b");
    if (root["variant"]) {
        const auto v = scalar<std::string>(root["variant"], "variant");
        if (v == "verbatim") c.variant = EdgeworthVariant::verbatim;
        else if (v == "hermite6") c.variant = EdgeworthVariant::hermite6;
        else throw ConfigError(line_of(root["variant"]), "variant must be verbatim or hermite6");
    }
    if (root["n_max"]) c.n_max = scalar<int>(root["n_max"], "n_max");
    if (root["mcmc_rho"]) c.mcmc_rho = real_grid(root["mcmc_rho"], "mcmc_rho");
    if (root["mcmc"]) c.mcmc = scalar<bool>(root["mcmc"], "mcmc");
    if (root["tail_t"]) c.tail_t = real_grid(root["tail_t"], "tail_t");
    if (root["sampler"]) parse_sampler(root["sampler"], c.sampler);
    if (root["seed"]) c.seed = scalar<std::uint64_t>(root["seed"], "seed");
    if (root["out"]) c.out = scalar<std::string>(root["out"], "out");
    if (root["format"]) c.format = scalar<std::string>(root["format"], "format");
    if (root["samples_out"]) c.samples_out = scalar<std::string>(root["samples_out"], "samples_out");
    if (root["threads"]) c.threads = scalar<int>(root["threads"], "threads");
    if (ov.seed) c.seed = ov.seed;
    if (ov.threads) c.threads = *ov.threads;
    if (ov.format) c.format = *ov.format;
    if (ov.out) c.out = *ov.out;

    if (c.format != "csv" && c.format != "json")
        throw ConfigError(root["format"] && !ov.format ? line_of(root["format"]) : 0, "format must be csv or json");
    if (c.threads < 1) throw ConfigError(root["threads"] && !ov.threads ? line_of(root["threads"]) : 0, "threads must be >= 1");
    if (c.d < 1 || c.d > 3) throw ConfigError(root["d"] ? line_of(root["d"]) : 0, "d must be 1, 2 or 3");
    if (c.resolution != 0 && c.resolution < 16) throw ConfigError(line_of(root["resolution"]), "resolution must be >= 16");
    if (c.n_max < 2 || c.n_max > 5) throw ConfigError(root["n_max"] ? line_of(root["n_max"]) : 0, "n_max must be in 2..5");

    // kind-specific requirements
    const auto need_n = [&](int lo) {
        if (c.n.empty()) throw ConfigError(0, "n list empty");
        for (int v : c.n)
            if (v < lo) throw ConfigError(line_of(root["n"]), "n entries must be >= " + std::to_string(lo));
    };
    if (kind == "clt") need_n(1);
    if (kind == "kop") need_n(4);
    if (kind == "gap") {
        if (c.n.empty()) c.n = {2, 3};
        for (int v : c.n)
            if (v < 2 || (v > 3 && !is_pure_quadratic(c.potential)))
                throw ConfigError(root["n"] ? line_of(root["n"]) : 0, "gap needs n in {2, 3} unless the potential is quadratic");
    }
    if (kind == "sample") {
        need_n(2);
        if (!c.seed) throw ConfigError(0, "seed missing: required for stochastic experiments");
    }
    if (kind == "recursion" && c.n_max >= 4 && !is_pure_quadratic(c.potential) && !c.seed)
        throw ConfigError(0, "seed missing: required for stochastic experiments");
    if (kind == "paths" || kind == "compare") {
        if (c.l.empty()) throw ConfigError(0, "l list empty");
        for (int v : c.l)
            if (v < 1 || v > 8) throw ConfigError(line_of(root["l"]), "l entries must be in 1..8");
    }
    if (kind == "compare") {
        if (c.d != 1) throw ConfigError(root["d"] ? line_of(root["d"]) : 0, "compare supports d = 1 only");
        if (c.mcmc && !c.seed) throw ConfigError(0, "seed missing: required for stochastic experiments");
    }
    if (c.seed) c.sampler.seed = *c.seed;
    c.sampler.threads = c.threads;
    return c;
}

}  // namespace spingap::cli

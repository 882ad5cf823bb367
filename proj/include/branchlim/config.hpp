#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "branchlim/common.hpp"
#include "branchlim/mechanisms.hpp"
#include "branchlim/pgf.hpp"
#include "branchlim/rayknight.hpp"

namespace branchlim {

enum class ExperimentKind {
    DbiSimulate,
    PsiSolve,
    Embed,
    LimitVerify,
    RayKnightVerify,
    Lemma22Table,
    GeneratorTable,
};

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::DbiSimulate: return "dbi-simulate";
        case ExperimentKind::PsiSolve: return "psi-solve";
        case ExperimentKind::Embed: return "embed";
        case ExperimentKind::LimitVerify: return "limit-verify";
        case ExperimentKind::RayKnightVerify: return "rayknight-verify";
        case ExperimentKind::Lemma22Table: return "lemma22-table";
        case ExperimentKind::GeneratorTable: return "generator-table";
    }
    return "?";
}

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ToleranceSpec {
    double abs_tol = 0.01; // finite-k bias slack on top of the Monte Carlo band
    double z_crit = 3.0;
    double ode_tol = 1e-10;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::LimitVerify;
    int schema_version = kConfigSchemaVersion;

    std::optional<BranchingMechanism> mechanism;
    std::optional<ImmigrationMechanism> immigration;
    std::optional<Pgf> g; // fixed offspring law (per-k constant)
    std::optional<Pgf> h; // fixed immigration law
    bool embed_family = false;

    double x = 1.0;
    std::vector<std::uint64_t> k_list;
    double gamma_c = 1.0; // gamma_k = c * k
    std::vector<double> t_grid;
    std::vector<double> lambda_grid;
    std::vector<double> x_grid;

    std::size_t n_paths = 1;
    std::uint64_t seed = 1;
    ToleranceSpec tol;
    std::uint64_t population_cap = kDefaultPopulationCap;

    // dbi-simulate
    std::uint64_t y0 = 0;
    std::uint64_t n_steps = 0;

    // psi-solve
    double t_max = 1.0;

    // rayknight
    std::optional<DriftedBm> bm;
    bool run_upward = true;
    bool run_downward = false;
    double u = 1.0;
    double a = 1.0;
    std::optional<SdeOptions> sde;

    std::string out_dir = "out";
};

namespace detail {

inline void require_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& context) {
    if (!obj.is_object()) throw ConfigError(context + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key()))
            throw ConfigError(context + ": unknown key '" + it.key() + "'");
    }
}

inline const nlohmann::json& need(const nlohmann::json& obj, const std::string& key,
                                  const std::string& context) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(context + ": missing key '" + key + "'");
    return *it;
}

inline LevyAtoms parse_atoms(const nlohmann::json& arr, const std::string& context) {
    if (!arr.is_array()) throw ConfigError(context + ": expected an array of [u, w] pairs");
    LevyAtoms atoms;
    for (const auto& pair : arr) {
        if (!pair.is_array() || pair.size() != 2)
            throw ConfigError(context + ": each atom must be a [location, weight] pair");
        atoms.atoms.push_back({pair[0].get<double>(), pair[1].get<double>()});
    }
    return atoms;
}

inline BranchingMechanism parse_mechanism(const nlohmann::json& j) {
    require_keys(j, {"beta", "alpha", "mu", "compensator"}, "mechanism");
    Compensator comp = Compensator::Linear;
    if (j.contains("compensator")) {
        const std::string c = j.at("compensator").get<std::string>();
        if (c == "linear") comp = Compensator::Linear;
        else if (c == "truncated") comp = Compensator::Truncated;
        else throw ConfigError("mechanism: compensator must be 'linear' or 'truncated'");
    }
    return BranchingMechanism(need(j, "beta", "mechanism").get<double>(),
                              need(j, "alpha", "mechanism").get<double>(),
                              j.contains("mu") ? parse_atoms(j.at("mu"), "mechanism.mu")
                                               : LevyAtoms{},
                              comp);
}

inline ImmigrationMechanism parse_immigration(const nlohmann::json& j) {
    require_keys(j, {"b", "m"}, "immigration");
    return ImmigrationMechanism(need(j, "b", "immigration").get<double>(),
                                j.contains("m") ? parse_atoms(j.at("m"), "immigration.m")
                                                : LevyAtoms{});
}

inline Pgf parse_pgf(const nlohmann::json& j, const std::string& context) {
    const std::string type = need(j, "type", context).get<std::string>();
    if (type == "geometric") {
        require_keys(j, {"type", "p"}, context);
        return Pgf::geometric(need(j, "p", context).get<double>());
    }
    if (type == "poisson") {
        require_keys(j, {"type", "mean"}, context);
        return Pgf::poisson(need(j, "mean", context).get<double>());
    }
    if (type == "point_mass") {
        require_keys(j, {"type", "n"}, context);
        return Pgf::point_mass(need(j, "n", context).get<std::uint64_t>());
    }
    if (type == "finite_support") {
        require_keys(j, {"type", "weights"}, context);
        return Pgf::finite_support(need(j, "weights", context).get<std::vector<double>>());
    }
    throw ConfigError(context + ": unknown pgf type '" + type + "'");
}

inline std::vector<double> parse_grid(const nlohmann::json& j, const std::string& context) {
    auto v = j.get<std::vector<double>>();
    if (v.empty()) throw ConfigError(context + ": grid must be nonempty");
    return v;
}

} // namespace detail

inline ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "dbi-simulate") return ExperimentKind::DbiSimulate;
    if (s == "psi-solve") return ExperimentKind::PsiSolve;
    if (s == "embed") return ExperimentKind::Embed;
    if (s == "limit-verify") return ExperimentKind::LimitVerify;
    if (s == "rayknight-verify") return ExperimentKind::RayKnightVerify;
    if (s == "lemma22-table") return ExperimentKind::Lemma22Table;
    if (s == "generator-table") return ExperimentKind::GeneratorTable;
    throw ConfigError("unknown experiment kind '" + s + "'");
}

inline void validate_for_kind(ExperimentConfig& cfg);

inline ExperimentConfig parse_config_json(const nlohmann::json& j) {
    using detail::need;
    using detail::require_keys;

    static const std::set<std::string> kTopLevel = {
        "schema_version", "experiment", "mechanism", "immigration", "pgf_family", "x",
        "k_list", "gamma_rule", "t_grid", "lambda_grid", "x_grid", "n_paths", "seed",
        "tolerances", "population_cap", "y0", "n_steps", "t_max", "bm", "direction", "u", "a",
        "sde", "out_dir"};
    require_keys(j, kTopLevel, "config");

    ExperimentConfig cfg;
    cfg.schema_version = need(j, "schema_version", "config").get<int>();
    if (cfg.schema_version != kConfigSchemaVersion)
        throw ConfigError("config: unsupported schema_version");
    cfg.kind = experiment_kind_from_string(need(j, "experiment", "config").get<std::string>());

    if (j.contains("mechanism")) cfg.mechanism = detail::parse_mechanism(j.at("mechanism"));
    if (j.contains("immigration"))
        cfg.immigration = detail::parse_immigration(j.at("immigration"));
    if (j.contains("pgf_family")) {
        const auto& fam = j.at("pgf_family");
        const std::string type = need(fam, "type", "pgf_family").get<std::string>();
        if (type == "embed") {
            require_keys(fam, {"type"}, "pgf_family");
            cfg.embed_family = true;
        } else if (type == "fixed") {
            require_keys(fam, {"type", "g", "h"}, "pgf_family");
            cfg.g = detail::parse_pgf(need(fam, "g", "pgf_family"), "pgf_family.g");
            cfg.h = detail::parse_pgf(need(fam, "h", "pgf_family"), "pgf_family.h");
        } else {
            throw ConfigError("pgf_family: type must be 'embed' or 'fixed'");
        }
    }
    if (j.contains("x")) cfg.x = j.at("x").get<double>();
    if (j.contains("k_list")) {
        cfg.k_list = j.at("k_list").get<std::vector<std::uint64_t>>();
        for (std::size_t i = 1; i < cfg.k_list.size(); ++i)
            if (cfg.k_list[i] <= cfg.k_list[i - 1])
                throw ConfigError("config: k_list must be strictly increasing");
    }
    if (j.contains("gamma_rule")) {
        const auto& gr = j.at("gamma_rule");
        require_keys(gr, {"type", "c"}, "gamma_rule");
        if (need(gr, "type", "gamma_rule").get<std::string>() != "linear")
            throw ConfigError("gamma_rule: only the 'linear' rule gamma_k = c*k is supported");
        if (gr.contains("c")) cfg.gamma_c = gr.at("c").get<double>();
        if (!(cfg.gamma_c > 0.0)) throw ConfigError("gamma_rule: c must be > 0");
    }
    if (j.contains("t_grid")) cfg.t_grid = detail::parse_grid(j.at("t_grid"), "t_grid");
    if (j.contains("lambda_grid"))
        cfg.lambda_grid = detail::parse_grid(j.at("lambda_grid"), "lambda_grid");
    if (j.contains("x_grid")) cfg.x_grid = detail::parse_grid(j.at("x_grid"), "x_grid");
    if (j.contains("n_paths")) cfg.n_paths = j.at("n_paths").get<std::size_t>();
    if (cfg.n_paths < 1) throw ConfigError("config: n_paths must be >= 1");
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        require_keys(t, {"abs_tol", "z_crit", "ode_tol"}, "tolerances");
        if (t.contains("abs_tol")) cfg.tol.abs_tol = t.at("abs_tol").get<double>();
        if (t.contains("z_crit")) cfg.tol.z_crit = t.at("z_crit").get<double>();
        if (t.contains("ode_tol")) cfg.tol.ode_tol = t.at("ode_tol").get<double>();
    }
    if (j.contains("population_cap"))
        cfg.population_cap = j.at("population_cap").get<std::uint64_t>();
    if (j.contains("y0")) cfg.y0 = j.at("y0").get<std::uint64_t>();
    if (j.contains("n_steps")) cfg.n_steps = j.at("n_steps").get<std::uint64_t>();
    if (j.contains("t_max")) cfg.t_max = j.at("t_max").get<double>();
    if (j.contains("bm")) {
        const auto& b = j.at("bm");
        require_keys(b, {"alpha", "beta"}, "bm");
        cfg.bm = DriftedBm(need(b, "alpha", "bm").get<double>(),
                           need(b, "beta", "bm").get<double>());
    }
    if (j.contains("direction")) {
        const std::string d = j.at("direction").get<std::string>();
        if (d == "upward") { cfg.run_upward = true; cfg.run_downward = false; }
        else if (d == "downward") { cfg.run_upward = false; cfg.run_downward = true; }
        else if (d == "both") { cfg.run_upward = true; cfg.run_downward = true; }
        else throw ConfigError("config: direction must be 'upward', 'downward' or 'both'");
    }
    if (j.contains("u")) cfg.u = j.at("u").get<double>();
    if (j.contains("a")) cfg.a = j.at("a").get<double>();
    if (j.contains("sde")) {
        const auto& s = j.at("sde");
        require_keys(s, {"k", "n_paths", "time_cap", "t_up_max", "t_down_max", "boxes"}, "sde");
        SdeOptions opt;
        opt.k = need(s, "k", "sde").get<std::uint64_t>();
        opt.n_paths = need(s, "n_paths", "sde").get<std::size_t>();
        if (s.contains("time_cap")) opt.time_cap = s.at("time_cap").get<double>();
        if (s.contains("t_up_max")) opt.t_up_max = s.at("t_up_max").get<double>();
        if (s.contains("t_down_max")) opt.t_down_max = s.at("t_down_max").get<double>();
        if (s.contains("boxes")) {
            for (const auto& box : s.at("boxes")) {
                if (!box.is_array() || box.size() != 2)
                    throw ConfigError("sde.boxes: each box must be a [lo, hi] pair");
                opt.boxes.emplace_back(box[0].get<double>(), box[1].get<double>());
            }
        }
        cfg.sde = opt;
    }
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();

    validate_for_kind(cfg);
    return cfg;
}

inline void validate_for_kind(ExperimentConfig& cfg) {
    const auto require = [&](bool ok, const char* msg) {
        if (!ok) throw ConfigError(std::string(to_string(cfg.kind)) + ": " + msg);
    };
    switch (cfg.kind) {
        case ExperimentKind::DbiSimulate:
            require(cfg.g.has_value() && cfg.h.has_value(),
                    "needs pgf_family of type 'fixed'");
            break;
        case ExperimentKind::PsiSolve:
            require(cfg.mechanism.has_value(), "needs a mechanism");
            require(!cfg.lambda_grid.empty(), "needs lambda_grid");
            require(!cfg.t_grid.empty(), "needs t_grid");
            break;
        case ExperimentKind::Embed:
            require(cfg.mechanism.has_value() && cfg.immigration.has_value(),
                    "needs mechanism and immigration");
            require(!cfg.k_list.empty(), "needs k_list");
            break;
        case ExperimentKind::LimitVerify:
            require(cfg.mechanism.has_value() && cfg.immigration.has_value(),
                    "needs mechanism and immigration (the theoretical side)");
            require(cfg.embed_family || (cfg.g.has_value() && cfg.h.has_value()),
                    "needs pgf_family ('embed' or 'fixed')");
            require(!cfg.k_list.empty(), "needs k_list");
            require(!cfg.t_grid.empty() && !cfg.lambda_grid.empty(),
                    "needs t_grid and lambda_grid");
            break;
        case ExperimentKind::RayKnightVerify:
            require(cfg.bm.has_value(), "needs bm");
            require(!cfg.k_list.empty(), "needs k_list");
            require(!cfg.t_grid.empty() && !cfg.lambda_grid.empty(),
                    "needs t_grid and lambda_grid");
            break;
        case ExperimentKind::Lemma22Table:
        case ExperimentKind::GeneratorTable:
            require(cfg.mechanism.has_value() && cfg.immigration.has_value(),
                    "needs mechanism and immigration");
            require(cfg.embed_family || (cfg.g.has_value() && cfg.h.has_value()),
                    "needs pgf_family ('embed' or 'fixed')");
            require(!cfg.k_list.empty(), "needs k_list");
            require(!cfg.lambda_grid.empty(), "needs lambda_grid");
            if (cfg.kind == ExperimentKind::GeneratorTable)
                require(!cfg.x_grid.empty(), "needs x_grid");
            break;
    }
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config_json(j);
}

} // namespace branchlim

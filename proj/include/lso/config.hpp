#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lso/lso.hpp"
#include "lso/models.hpp"

namespace lso {

using json = nlohmann::ordered_json;

struct RunOptions {
    std::vector<double> epsilon_grid = {1e-1, 1e-2};
    double kernel_tol = 1e-8;
    quad::Options quad;
    int oracle_modes = 4000;
    std::uint64_t seed = 1;
    std::vector<double> bohr_frequencies;  // empty: all sectors
};

struct ModelConfig {
    OpenSystemModel model;
    RunOptions run;
    std::string name = "inline";
    std::string canonical;  // canonical serialization used for the hash
};

namespace cfg_detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double positive(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    const double v = j.at(key).get<double>();
    if (!(v > 0.0)) throw ConfigError(where + ": '" + key + "' must be positive");
    return v;
}

inline Matrix parse_matrix(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a matrix");
    const int n = static_cast<int>(j.size());
    Matrix g(n, n);
    for (int i = 0; i < n; ++i) {
        const auto& row = j.at(i);
        if (!row.is_array() || static_cast<int>(row.size()) != n)
            throw ConfigError(where + ": matrix must be square");
        for (int k = 0; k < n; ++k) {
            const auto& cell = row.at(k);
            if (!cell.is_array() || cell.size() != 2)
                throw ConfigError(where + ": entries must be [re, im] pairs");
            g(i, k) = Complex(cell.at(0).get<double>(), cell.at(1).get<double>());
        }
    }
    return g;
}

inline FormFactor parse_form_factor(const json& j) {
    const std::string where = "form_factor";
    if (!j.contains("family")) throw ConfigError(where + ": missing 'family'");
    const std::string family = j.at("family").get<std::string>();
    if (family == "power_cutoff") {
        check_keys(j, {"family", "gamma", "ir_exponent", "r_max"}, where);
        return FormFactor::power_cutoff(positive(j, "gamma", where),
                                        j.at("ir_exponent").get<double>(),
                                        positive(j, "r_max", where));
    }
    if (family == "gaussian_damped") {
        check_keys(j, {"family", "gamma", "ir_exponent", "uv_scale", "r_max"}, where);
        return FormFactor::gaussian_damped(
            positive(j, "gamma", where), j.at("ir_exponent").get<double>(),
            positive(j, "uv_scale", where), positive(j, "r_max", where));
    }
    if (family == "table") {
        check_keys(j, {"family", "points", "ir_exponent"}, where);
        std::vector<std::pair<double, double>> pts;
        for (const auto& p : j.at("points"))
            pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        return FormFactor::from_table(pts, j.at("ir_exponent").get<double>());
    }
    throw ConfigError(where + ": unknown family '" + family + "'");
}

} // namespace cfg_detail

inline ModelConfig parse_config(const json& j) try {
    using namespace cfg_detail;
    check_keys(j, {"small_system", "couplings", "lambda", "run", "notes"}, "config");
    ModelConfig cfg;

    const auto& ss = j.at("small_system");
    if (ss.contains("random")) {
        check_keys(ss, {"random"}, "small_system");
        const auto& r = ss.at("random");
        check_keys(r, {"dim", "seed", "spectrum"}, "small_system.random");
        const int dim = r.at("dim").get<int>();
        if (dim < 2) throw ConfigError("small_system.random: dim must be >= 2");
        const auto kind = r.value("spectrum", std::string("simple")) == "mixed"
                              ? SpectrumKind::Mixed
                              : SpectrumKind::Simple;
        std::mt19937_64 rng(r.at("seed").get<std::uint64_t>());
        cfg.model.small.dim = dim;
        cfg.model.small.energies = random_energies(rng, dim, kind);
    } else {
        check_keys(ss, {"energies", "degeneracy_tol"}, "small_system");
        if (!ss.contains("energies")) throw ConfigError("small_system: missing 'energies'");
        cfg.model.small.energies = ss.at("energies").get<std::vector<double>>();
        cfg.model.small.dim = static_cast<int>(cfg.model.small.energies.size());
        cfg.model.small.degeneracy_tol = ss.value("degeneracy_tol", 1e-9);
    }

    if (!j.contains("couplings") || !j.at("couplings").is_array() || j.at("couplings").empty())
        throw ConfigError("config: 'couplings' must be a nonempty array");
    for (const auto& c : j.at("couplings")) {
        check_keys(c, {"G", "reservoir"}, "coupling");
        Coupling cpl;
        const auto& gj = c.at("G");
        if (gj.is_object()) {
            check_keys(gj, {"random_hermitian"}, "coupling.G");
            const auto& r = gj.at("random_hermitian");
            check_keys(r, {"seed", "scale"}, "coupling.G.random_hermitian");
            std::mt19937_64 rng(r.at("seed").get<std::uint64_t>());
            cpl.G = random_hermitian(rng, cfg.model.small.dim, r.value("scale", 0.5));
        } else {
            cpl.G = parse_matrix(gj, "coupling.G");
        }
        const auto& rj = c.at("reservoir");
        check_keys(rj, {"beta", "form_factor"}, "reservoir");
        cpl.reservoir.beta = positive(rj, "beta", "reservoir");
        cpl.reservoir.form_factor = parse_form_factor(rj.at("form_factor"));
        cfg.model.couplings.push_back(std::move(cpl));
    }
    cfg.model.lambda = j.value("lambda", 1.0);

    if (j.contains("run")) {
        const auto& r = j.at("run");
        check_keys(r,
                   {"epsilon_grid", "kernel_tol", "quad_abs_tol", "quad_rel_tol",
                    "oracle_modes", "seed", "bohr_frequencies"},
                   "run");
        if (r.contains("epsilon_grid"))
            cfg.run.epsilon_grid = r.at("epsilon_grid").get<std::vector<double>>();
        for (double e : cfg.run.epsilon_grid)
            if (!(e > 0.0)) throw ConfigError("run.epsilon_grid entries must be positive");
        cfg.run.kernel_tol = r.value("kernel_tol", 1e-8);
        if (!(cfg.run.kernel_tol > 0.0)) throw ConfigError("run.kernel_tol must be positive");
        cfg.run.quad.abs_tol = r.value("quad_abs_tol", 1e-10);
        cfg.run.quad.rel_tol = r.value("quad_rel_tol", 1e-8);
        cfg.run.oracle_modes = r.value("oracle_modes", 4000);
        if (cfg.run.oracle_modes < 2) throw ConfigError("run.oracle_modes must be >= 2");
        cfg.run.seed = r.value("seed", std::uint64_t{1});
        if (r.contains("bohr_frequencies"))
            cfg.run.bohr_frequencies = r.at("bohr_frequencies").get<std::vector<double>>();
    }
    cfg.model.validate();
    cfg.canonical = j.dump();
    return cfg;
} catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config error: ") + e.what());
}

inline ModelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    ModelConfig cfg = parse_config(j);
    auto slash = path.find_last_of('/');
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    if (base.size() > 5 && base.substr(base.size() - 5) == ".json")
        base = base.substr(0, base.size() - 5);
    cfg.name = base;
    return cfg;
}

// FNV-1a over the canonical serialization.
inline std::string config_hash(const ModelConfig& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : cfg.canonical) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace lso

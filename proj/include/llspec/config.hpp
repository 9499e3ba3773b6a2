// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file config.hpp
 * @brief Run configuration: schema, strict JSON parsing and the config hash.
 *
 * Schema (all keys optional unless marked):
 *
 *     kind            "NTES" | "TES"                       (required)
 *     c, L            positive reals                       (required)
 *     N               positive integer                     (required)
 *     T               positive real, TES only
 *     match_energy    bool, TES only: T from the NTES energy at (c, N/L)
 *     n_copies        0 = representative state, else sampled copies
 *     energy_window   relative energy window for copies     (0.05)
 *     seed            unsigned integer                      (1)
 *     scan            { saturation_target, class_weight_floor, max_P_m,
 *                       max_P_l, max_N_p, max_energy, parity_shift }
 *     broadening      { sigma_over_eF, bin_over_eF, line_shapes_k_over_kF }
 *     output          directory                             ("llspec_out")
 *     regression_set  path of the oracle regression file    ("")
 *
 * Unknown keys are rejected.  The hash covers every field except output.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "llspec/scan.hpp"

namespace llspec {

/// Configuration problem tied to a key path such as "scan.max_P_m".
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(fmt::format("config key '{}': {}", key, what)), key_(std::move(key)) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

struct BroadeningConfig {
    double sigma_over_eF = 0.1;
    double bin_over_eF = 0.02;
    std::vector<double> line_shapes_k_over_kF{0.5};
    friend bool operator==(const BroadeningConfig&, const BroadeningConfig&) = default;
};

struct RunConfig {
    std::string kind;  ///< "NTES" or "TES"
    double c = 0.0;
    double L = 0.0;
    int N = 0;
    std::optional<double> T;
    bool match_energy = false;
    int n_copies = 0;
    double energy_window = 0.05;
    std::uint64_t seed = 1;
    ScanThresholds scan;
    ParityShift parity_shift = ParityShift::minus_half;
    BroadeningConfig broadening;
    std::string output = "llspec_out";
    std::string regression_set;

    [[nodiscard]] ModelParams params() const { return {c, L, N}; }
    [[nodiscard]] bool thermal() const { return kind == "TES"; }

    friend bool operator==(const RunConfig& a, const RunConfig& b) {
        const auto& s = a.scan;
        const auto& t = b.scan;
        return a.kind == b.kind && a.c == b.c && a.L == b.L && a.N == b.N && a.T == b.T &&
               a.match_energy == b.match_energy && a.n_copies == b.n_copies && a.energy_window == b.energy_window &&
               a.seed == b.seed && s.saturation_target == t.saturation_target &&
               s.class_weight_floor == t.class_weight_floor && s.max_P_m == t.max_P_m && s.max_P_l == t.max_P_l &&
               s.max_N_p == t.max_N_p && s.max_energy == t.max_energy && a.parity_shift == b.parity_shift &&
               a.broadening == b.broadening && a.output == b.output && a.regression_set == b.regression_set;
    }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& prefix, std::initializer_list<const char*> known) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(prefix + key, "unknown key");
    }
}

inline double get_real(const json& obj, const std::string& prefix, const char* key, std::optional<double> dflt) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (!dflt) throw ConfigError(prefix + key, "missing");
        return *dflt;
    }
    if (!it->is_number()) throw ConfigError(prefix + key, "expected a number");
    return it->get<double>();
}

inline long long get_int(const json& obj, const std::string& prefix, const char* key, std::optional<long long> dflt) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (!dflt) throw ConfigError(prefix + key, "missing");
        return *dflt;
    }
    if (!it->is_number_integer()) throw ConfigError(prefix + key, "expected an integer");
    return it->get<long long>();
}

inline std::string get_string(const json& obj, const std::string& prefix, const char* key,
                              std::optional<std::string> dflt) {
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (!dflt) throw ConfigError(prefix + key, "missing");
        return *dflt;
    }
    if (!it->is_string()) throw ConfigError(prefix + key, "expected a string");
    return it->get<std::string>();
}

inline bool get_bool(const json& obj, const std::string& prefix, const char* key, bool dflt) {
    const auto it = obj.find(key);
    if (it == obj.end()) return dflt;
    if (!it->is_boolean()) throw ConfigError(prefix + key, "expected true or false");
    return it->get<bool>();
}

inline void require(bool ok, const std::string& key, const char* what) {
    if (!ok) throw ConfigError(key, what);
}

}  // namespace detail

/// Parse and validate; throws ConfigError naming the offending key.
[[nodiscard]] inline RunConfig config_from_json(const nlohmann::json& j) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
    reject_unknown(j, "", {"kind", "c", "L", "N", "T", "match_energy", "n_copies", "energy_window", "seed", "scan",
                           "broadening", "output", "regression_set"});
    RunConfig cfg;
    cfg.kind = get_string(j, "", "kind", std::nullopt);
    require(cfg.kind == "NTES" || cfg.kind == "TES", "kind", "must be \"NTES\" or \"TES\"");
    cfg.c = get_real(j, "", "c", std::nullopt);
    require(cfg.c > 0.0, "c", "must be > 0");
    cfg.L = get_real(j, "", "L", std::nullopt);
    require(cfg.L > 0.0, "L", "must be > 0");
    const long long n = get_int(j, "", "N", std::nullopt);
    require(n >= 1 && n <= 100000, "N", "must be a positive integer");
    cfg.N = static_cast<int>(n);
    cfg.match_energy = get_bool(j, "", "match_energy", false);
    if (j.contains("T")) {
        cfg.T = get_real(j, "", "T", std::nullopt);
        require(*cfg.T > 0.0, "T", "must be > 0");
        require(cfg.thermal(), "T", "only valid for kind TES");
        require(!cfg.match_energy, "T", "conflicts with match_energy = true");
    }
    require(!cfg.match_energy || cfg.thermal(), "match_energy", "only valid for kind TES");
    require(!cfg.thermal() || cfg.T || cfg.match_energy, "T", "TES needs T or match_energy = true");
    const long long copies = get_int(j, "", "n_copies", 0);
    require(copies >= 0 && copies <= 100000, "n_copies", "must be >= 0");
    cfg.n_copies = static_cast<int>(copies);
    cfg.energy_window = get_real(j, "", "energy_window", 0.05);
    require(cfg.energy_window > 0.0, "energy_window", "must be > 0");
    if (j.contains("seed")) {
        const auto& s = j.at("seed");
        require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0), "seed",
                "expected a non-negative integer");
        cfg.seed = s.get<std::uint64_t>();
    }

    if (j.contains("scan")) {
        const auto& s = j.at("scan");
        require(s.is_object(), "scan", "expected an object");
        reject_unknown(s, "scan.", {"saturation_target", "class_weight_floor", "max_P_m", "max_P_l", "max_N_p",
                                    "max_energy", "parity_shift"});
        auto& t = cfg.scan;
        t.saturation_target = get_real(s, "scan.", "saturation_target", t.saturation_target);
        require(t.saturation_target > 0.0 && t.saturation_target <= 1.0, "scan.saturation_target",
                "must be in (0, 1]");
        t.class_weight_floor = get_real(s, "scan.", "class_weight_floor", t.class_weight_floor);
        require(t.class_weight_floor >= 0.0, "scan.class_weight_floor", "must be >= 0");
        t.max_P_m = static_cast<int>(get_int(s, "scan.", "max_P_m", t.max_P_m));
        require(t.max_P_m >= 0, "scan.max_P_m", "must be >= 0 (0 selects 4N)");
        t.max_P_l = static_cast<int>(get_int(s, "scan.", "max_P_l", t.max_P_l));
        require(t.max_P_l >= 0, "scan.max_P_l", "must be >= 0 (0 selects max_P_m)");
        t.max_N_p = static_cast<int>(get_int(s, "scan.", "max_N_p", t.max_N_p));
        t.max_energy = get_real(s, "scan.", "max_energy", t.max_energy);
        require(t.max_energy >= 0.0, "scan.max_energy", "must be >= 0 (0 selects 16 eps_F)");
        const std::string shift = get_string(s, "scan.", "parity_shift", to_string(cfg.parity_shift));
        try {
            cfg.parity_shift = parity_shift_from_string(shift);
        } catch (const InvalidArgument&) {
            throw ConfigError("scan.parity_shift", "must be \"minus_half\" or \"plus_half\"");
        }
    }

    if (j.contains("broadening")) {
        const auto& b = j.at("broadening");
        require(b.is_object(), "broadening", "expected an object");
        reject_unknown(b, "broadening.", {"sigma_over_eF", "bin_over_eF", "line_shapes_k_over_kF"});
        auto& br = cfg.broadening;
        br.sigma_over_eF = get_real(b, "broadening.", "sigma_over_eF", br.sigma_over_eF);
        require(br.sigma_over_eF > 0.0, "broadening.sigma_over_eF", "must be > 0");
        br.bin_over_eF = get_real(b, "broadening.", "bin_over_eF", br.bin_over_eF);
        require(br.bin_over_eF > 0.0, "broadening.bin_over_eF", "must be > 0");
        if (b.contains("line_shapes_k_over_kF")) {
            const auto& ks = b.at("line_shapes_k_over_kF");
            require(ks.is_array(), "broadening.line_shapes_k_over_kF", "expected an array of numbers");
            br.line_shapes_k_over_kF.clear();
            for (const auto& k : ks) {
                require(k.is_number(), "broadening.line_shapes_k_over_kF", "expected an array of numbers");
                br.line_shapes_k_over_kF.push_back(k.get<double>());
            }
        }
    }

    cfg.output = get_string(j, "", "output", cfg.output);
    require(!cfg.output.empty(), "output", "must not be empty");
    cfg.regression_set = get_string(j, "", "regression_set", cfg.regression_set);
    return cfg;
}

/// Full (normalized) form; config_from_json(config_to_json(c)) == c.
[[nodiscard]] inline nlohmann::json config_to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["kind"] = cfg.kind;
    j["c"] = cfg.c;
    j["L"] = cfg.L;
    j["N"] = cfg.N;
    if (cfg.T) j["T"] = *cfg.T;
    j["match_energy"] = cfg.match_energy;
    j["n_copies"] = cfg.n_copies;
    j["energy_window"] = cfg.energy_window;
    j["seed"] = cfg.seed;
    j["scan"] = {{"saturation_target", cfg.scan.saturation_target},
                 {"class_weight_floor", cfg.scan.class_weight_floor},
                 {"max_P_m", cfg.scan.max_P_m},
                 {"max_P_l", cfg.scan.max_P_l},
                 {"max_N_p", cfg.scan.max_N_p},
                 {"max_energy", cfg.scan.max_energy},
                 {"parity_shift", to_string(cfg.parity_shift)}};
    j["broadening"] = {{"sigma_over_eF", cfg.broadening.sigma_over_eF},
                       {"bin_over_eF", cfg.broadening.bin_over_eF},
                       {"line_shapes_k_over_kF", cfg.broadening.line_shapes_k_over_kF}};
    j["output"] = cfg.output;
    j["regression_set"] = cfg.regression_set;
    return j;
}

[[nodiscard]] inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("<file>", "cannot read " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is, nullptr, true, /*ignore_comments=*/true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<file>", fmt::format("{}: {}", path.string(), e.what()));
    }
    return config_from_json(j);
}

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
[[nodiscard]] inline std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return fmt::format("{:016x}", h);
}

/// Hash of the canonical JSON form without the output directory.
[[nodiscard]] inline std::string config_hash(const RunConfig& cfg) {
    auto j = config_to_json(cfg);
    j.erase("output");
    return fnv1a_hex(j.dump());
}

}  // namespace llspec

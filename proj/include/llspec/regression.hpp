// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file regression.hpp
 * @brief Oracle regression set: determinant results against frozen coordinate-space values.
 *
 * File layout (quantum numbers as plain values, half-odd integers allowed):
 *
 *     { "tolerance": 1e-6,
 *       "norms":        [ {"id", "c", "L", "qns", "norm_sq"} ],
 *       "form_factors": [ {"id", "c", "L", "bra", "ket", "weight"} ],
 *       "shells":       [ {"id", "ref", "max_momentum", "max_moves", "size"} ] }
 *
 * Each entry may carry its own "tolerance".  Shells are always checked live
 * (class union against exhaustive enumeration, plus the frozen size).
 */

#pragma once

#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "llspec/form_factors.hpp"
#include "llspec/oracle.hpp"
#include "llspec/scan.hpp"

namespace llspec {

struct RegressionCheck {
    std::string kind;  ///< "norm", "form_factor" or "shell"
    std::string id;
    double expected = 0.0;
    double actual = 0.0;
    double rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct RegressionReport {
    std::vector<RegressionCheck> checks;

    [[nodiscard]] long failures() const {
        return std::count_if(checks.begin(), checks.end(), [](const auto& c) { return !c.passed; });
    }
    /// An empty set verifies nothing and counts as a failure.
    [[nodiscard]] bool ok() const { return !checks.empty() && failures() == 0; }
};

struct RegressionOptions {
    bool live_oracle = false;  ///< recompute coordinate-space values instead of reading the frozen ones
    double perturb = 0.0;      ///< added to the first ket rapidity of every form-factor pair
    oracle::OracleOptions oracle;
};

namespace detail {

inline BetheState regression_state(double c, double L, const nlohmann::json& qns) {
    const auto v = qns.get<std::vector<double>>();
    if (v.empty()) return vacuum_state(c, L);
    return solve_bethe({c, L, static_cast<int>(v.size())}, QNConfig::from_values(v));
}

inline double entry_tolerance(const nlohmann::json& e, double dflt) {
    return e.contains("tolerance") ? e.at("tolerance").get<double>() : dflt;
}

inline RegressionCheck compare(std::string kind, std::string id, double expected, double actual, double tol) {
    const double err = expected != 0.0 ? std::abs(actual - expected) / std::abs(expected) : std::abs(actual);
    return {std::move(kind), std::move(id), expected, actual, err, tol, std::isfinite(err) && err <= tol};
}

inline std::set<QNConfig> shell_by_classes(const QNConfig& ref, int max_momentum, int max_moves) {
    std::set<QNConfig> out;
    for (int np = 0; np <= max_moves; ++np)
        for (int pm = 0; pm <= max_momentum; ++pm)
            for (int pl = 0; pm + pl <= max_momentum; ++pl)
                for (int nl = 0; nl <= np; ++nl) {
                    const ExcitationTag t{pm, np, pl, nl};
                    if (!t.valid()) continue;
                    for (auto& q : enumerate_class(ref, t)) out.insert(std::move(q));
                }
    return out;
}

}  // namespace detail

[[nodiscard]] inline nlohmann::json load_regression_set(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot read regression set " + path.string());
    if (is.peek() == std::ifstream::traits_type::eof()) return nlohmann::json::object();
    return nlohmann::json::parse(is);
}

/// Compare every entry; @p on_check sees each result as it is produced.
[[nodiscard]] inline RegressionReport run_regression(const nlohmann::json& set, const RegressionOptions& opt = {},
                                                     const std::function<void(const RegressionCheck&)>& on_check = {}) {
    RegressionReport rep;
    if (!set.is_object()) return rep;
    const double tol = set.value("tolerance", 1e-6);
    auto push = [&](RegressionCheck c) {
        if (on_check) on_check(c);
        rep.checks.push_back(std::move(c));
    };
    for (const auto& e : set.value("norms", nlohmann::json::array())) {
        const BetheState s = detail::regression_state(e.at("c"), e.at("L"), e.at("qns"));
        const double expected = opt.live_oracle ? oracle::norm_direct(s, opt.oracle) : e.at("norm_sq").get<double>();
        push(detail::compare("norm", e.value("id", ""), expected, std::exp(s.log_norm_sq),
                             detail::entry_tolerance(e, tol)));
    }
    for (const auto& e : set.value("form_factors", nlohmann::json::array())) {
        const double c = e.at("c"), L = e.at("L");
        const BetheState bra = detail::regression_state(c, L, e.at("bra"));
        const BetheState ket = detail::regression_state(c, L, e.at("ket"));
        const double expected =
            opt.live_oracle ? oracle::weight_direct(bra, ket, opt.oracle) : e.at("weight").get<double>();
        BetheState probe = ket;
        if (opt.perturb != 0.0) {
            probe.rapidities.front() += opt.perturb;
            probe.log_norm_sq = log_norm_sq(probe.params, probe.rapidities);
        }
        push(detail::compare("form_factor", e.value("id", ""), expected, normalized_weight(bra, probe),
                             detail::entry_tolerance(e, tol)));
    }
    for (const auto& e : set.value("shells", nlohmann::json::array())) {
        const QNConfig ref = QNConfig::from_values(e.at("ref").get<std::vector<double>>());
        const int pm = e.at("max_momentum"), moves = e.at("max_moves");
        const auto brute = oracle::shell_brute_force(ref, pm, moves);
        const auto classes = detail::shell_by_classes(ref, pm, moves);
        RegressionCheck c = detail::compare("shell", e.value("id", ""), e.at("size").get<double>(),
                                            static_cast<double>(classes.size()), 0.0);
        c.passed = c.passed && classes == brute;
        push(std::move(c));
    }
    return rep;
}

/// Recompute every frozen value with the coordinate-space oracle.
[[nodiscard]] inline nlohmann::json freeze_regression_set(nlohmann::json set, const oracle::OracleOptions& opt = {}) {
    auto entries = [&](const char* key) -> nlohmann::json& {
        if (!set.contains(key)) set[key] = nlohmann::json::array();
        return set[key];
    };
    for (auto& e : entries("norms"))
        e["norm_sq"] = oracle::norm_direct(detail::regression_state(e.at("c"), e.at("L"), e.at("qns")), opt);
    for (auto& e : entries("form_factors")) {
        const double c = e.at("c"), L = e.at("L");
        e["weight"] = oracle::weight_direct(detail::regression_state(c, L, e.at("bra")),
                                            detail::regression_state(c, L, e.at("ket")), opt);
    }
    for (auto& e : entries("shells")) {
        const QNConfig ref = QNConfig::from_values(e.at("ref").get<std::vector<double>>());
        e["size"] = oracle::shell_brute_force(ref, e.at("max_momentum"), e.at("max_moves")).size();
    }
    return set;
}

[[nodiscard]] inline nlohmann::json regression_report_json(const RegressionReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks)
        checks.push_back({{"kind", c.kind},
                          {"id", c.id},
                          {"expected", c.expected},
                          {"actual", c.actual},
                          {"rel_error", c.rel_error},
                          {"tolerance", c.tolerance},
                          {"passed", c.passed}});
    return {{"checks", checks}, {"failures", r.failures()}, {"passed", r.ok()}};
}

}  // namespace llspec

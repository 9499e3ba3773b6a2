// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

// llspec command-line driver: tba | sample | scan | spectrum | pipeline | verify.
//
// Exit status: 0 ok, 1 internal error, 2 configuration error, 3 verification failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "llspec/config.hpp"
#include "llspec/pipeline.hpp"
#include "llspec/regression.hpp"

#ifndef LLSPEC_DATA_DIR
#define LLSPEC_DATA_DIR "data"
#endif

namespace {

enum Exit : int { kOk = 0, kInternal = 1, kConfig = 2, kVerification = 3 };

struct CommonFlags {
    std::string config;
    bool resume = false;
    int workers = 0;
    std::string output;
    std::optional<std::uint64_t> seed;
};

struct VerifyFlags {
    std::string regression;
    double perturb = 0.0;
    bool live = false;
    bool freeze = false;
    std::string report;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
    auto* c = cmd->add_option("--config", f.config, "run configuration (JSON)");
    if (config_required) c->required();
    cmd->add_flag("--resume", f.resume, "continue from checkpoints in the output directory");
    cmd->add_option("--workers", f.workers, "scan worker threads (default: available cores)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--output", f.output, "output directory (overrides the config)");
    cmd->add_option("--seed", f.seed, "random seed (overrides the config)");
}

llspec::RunContext make_context(const CommonFlags& f) {
    llspec::RunContext ctx;
    ctx.config = llspec::load_config(f.config);
    if (f.seed) ctx.config.seed = *f.seed;
    if (!f.output.empty()) ctx.config.output = f.output;
    ctx.output = ctx.config.output;
    ctx.resume = f.resume;
    const unsigned hw = std::thread::hardware_concurrency();
    ctx.workers = f.workers > 0 ? f.workers : static_cast<int>(hw > 0 ? hw : 1);
    ctx.log = [](const std::string& msg) { spdlog::info("{}", msg); };
    spdlog::info("config {} (hash {}), output {}, {} worker(s)", f.config, ctx.hash(), ctx.output.string(),
                 ctx.workers);
    return ctx;
}

int run_verify(const CommonFlags& common, const VerifyFlags& v) {
    std::filesystem::path path = std::filesystem::path(LLSPEC_DATA_DIR) / "regression_set.json";
    if (!common.config.empty()) {
        const auto cfg = llspec::load_config(common.config);
        if (!cfg.regression_set.empty()) path = cfg.regression_set;
    }
    if (!v.regression.empty()) path = v.regression;

    nlohmann::json set;
    try {
        set = llspec::load_regression_set(path);
    } catch (const nlohmann::json::exception& e) {
        throw llspec::ConfigError("regression_set", fmt::format("{}: {}", path.string(), e.what()));
    } catch (const llspec::InvalidArgument& e) {
        throw llspec::ConfigError("regression_set", e.what());
    }
    if (v.freeze) {
        spdlog::info("freezing oracle values into {}", path.string());
        set = llspec::freeze_regression_set(std::move(set));
        std::ofstream os(path);
        os << set.dump(1) << '\n';
    }

    llspec::RegressionOptions opt;
    opt.live_oracle = v.live;
    opt.perturb = v.perturb;
    if (v.perturb != 0.0) spdlog::warn("perturbing the first ket rapidity of every pair by {:g}", v.perturb);
    llspec::RegressionReport rep;
    try {
        rep = llspec::run_regression(set, opt, [](const llspec::RegressionCheck& c) {
            const auto level = c.passed ? spdlog::level::info : spdlog::level::err;
            spdlog::log(level, "{:4} {:11} {:24} expected {:.12g} got {:.12g} rel {:.2e} (tol {:.0e})",
                        c.passed ? "ok" : "FAIL", c.kind, c.id, c.expected, c.actual, c.rel_error, c.tolerance);
        });
    } catch (const nlohmann::json::exception& e) {
        throw llspec::ConfigError("regression_set", fmt::format("{}: malformed entry: {}", path.string(), e.what()));
    }
    const auto j = llspec::regression_report_json(rep);
    if (!v.report.empty()) {
        std::ofstream os(v.report);
        os << j.dump(2) << '\n';
    }
    if (rep.checks.empty()) {
        spdlog::error("regression set {} contains no comparisons", path.string());
        return kVerification;
    }
    for (const auto& c : rep.checks)
        if (!c.passed) spdlog::error("failing {} entry: {}", c.kind, c.id);
    std::cout << fmt::format("verify: {} checks, {} failures\n", rep.checks.size(), rep.failures());
    return rep.ok() ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("llspec");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

    CLI::App app{"llspec: Lieb-Liniger one-body correlation spectra from Bethe-ansatz scans"};
    app.require_subcommand(1);
    app.fallthrough();
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    CommonFlags common;
    VerifyFlags vf;
    auto* tba = app.add_subcommand("tba", "solve the macrostate (matching T for TES when requested)");
    auto* sample = app.add_subcommand("sample", "representative state or sampled copies");
    auto* scan = app.add_subcommand("scan", "sum-rule scan of every state");
    auto* spectrum = app.add_subcommand("spectrum", "broadened k-omega grid and line shapes");
    auto* pipeline = app.add_subcommand("pipeline", "all stages end to end");
    auto* verify = app.add_subcommand("verify", "determinants and class enumeration against the oracle set");
    for (auto* cmd : {tba, sample, scan, spectrum, pipeline}) add_common(cmd, common, true);
    add_common(verify, common, false);
    verify->add_option("--regression", vf.regression, "regression-set file");
    verify->add_option("--perturb", vf.perturb, "shift one ket rapidity per pair (sensitivity check)");
    verify->add_flag("--live", vf.live, "recompute oracle values instead of reading frozen ones");
    verify->add_flag("--freeze", vf.freeze, "recompute and store oracle values in the regression file");
    verify->add_option("--report", vf.report, "write the comparison report as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (verify->parsed()) return run_verify(common, vf);
        const llspec::RunContext ctx = make_context(common);
        nlohmann::json summary;
        if (tba->parsed()) {
            const auto r = llspec::run_tba(ctx);
            summary = llspec::tba_header(r.solution);
        } else if (sample->parsed()) {
            const auto r = llspec::run_sample(ctx, llspec::run_tba(ctx));
            summary = {{"states", r.states.size()}};
        } else if (scan->parsed()) {
            const auto r = llspec::run_scan(ctx, llspec::load_or_sample(ctx));
            nlohmann::json sats = nlohmann::json::array();
            for (const auto& s : r.sets) sats.push_back(s.saturation);
            summary = {{"saturation_per_state", sats}};
        } else if (spectrum->parsed()) {
            const auto r = llspec::run_spectrum(ctx, llspec::load_or_scan(ctx));
            summary = r.manifest;
            summary.erase("line_shapes");
        } else if (pipeline->parsed()) {
            summary = llspec::run_pipeline(ctx);
            summary.erase("spectrum");
            summary.erase("config");
        }
        summary["config_hash"] = ctx.hash();
        std::cout << summary.dump() << '\n';
        return kOk;
    } catch (const llspec::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kConfig;
    } catch (const llspec::StageError& e) {
        spdlog::error("{} (checkpoints kept in the output directory)", e.what());
        return kInternal;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return kInternal;
    }
}

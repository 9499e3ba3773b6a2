// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file pipeline.hpp
 * @brief tba -> sample -> scan -> spectrum orchestration over an output directory.
 *
 * Files written into the output directory, each tagged with the config hash:
 *
 *     tba.csv, tba.json                 macrostate (and matched T for TES)
 *     states.jsonl(.manifest.json)      Bethe states to scan
 *     scan_<i>.ckpt.jsonl               scan checkpoint of state i
 *     lines_<i>.csv, report_<i>.json    spectral lines of state i
 *     grid.csv, spectrum.json           broadened k-omega grid
 *     line_shape_k<k>.csv               rescaled line shapes
 *     pipeline.json                     final manifest
 *
 * A stage reuses upstream files whose config hash matches and recomputes
 * them otherwise.  Timing lives only under the "timing" key of manifests.
 */

#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "llspec/config.hpp"
#include "llspec/sampler.hpp"
#include "llspec/spectra.hpp"
#include "llspec/tba.hpp"

namespace llspec {

/// Failure inside a named pipeline stage.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(fmt::format("stage '{}' failed: {}", stage, what)), stage_(std::move(stage)) {}
    [[nodiscard]] const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct RunContext {
    RunConfig config;
    std::filesystem::path output;
    int workers = 1;
    bool resume = false;
    std::function<void(const std::string&)> log;  ///< optional progress sink

    [[nodiscard]] std::string hash() const { return config_hash(config); }
    void info(const std::string& msg) const {
        if (log) log(msg);
    }
};

struct TbaResult {
    TbaSolution solution;
    double T = std::numeric_limits<double>::quiet_NaN();  ///< TES only
    double ntes_energy = std::numeric_limits<double>::quiet_NaN();  ///< matched runs only
    double seconds = 0.0;
};

struct SampleResult {
    std::vector<BetheState> states;
    double T = std::numeric_limits<double>::quiet_NaN();
    bool reused = false;
    double seconds = 0.0;
};

struct ScanStageResult {
    std::vector<LineSet> sets;
    std::vector<nlohmann::json> reports;
    double T = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
};

struct SpectrumResult {
    SpectrumGrid grid;
    nlohmann::json manifest;
    std::string grid_checksum;
    double seconds = 0.0;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
    std::ofstream os(p);
    if (!os) throw Error("cannot write " + p.string());
    os << j.dump(2) << '\n';
}

inline std::optional<nlohmann::json> read_json_if(const std::filesystem::path& p) {
    std::ifstream is(p);
    if (!is) return std::nullopt;
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error&) {
        return std::nullopt;
    }
}

inline bool hash_matches(const std::optional<nlohmann::json>& j, const std::string& hash) {
    return j && j->contains("config_hash") && j->at("config_hash") == hash;
}

inline std::string file_checksum(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot read " + p.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return fnv1a_hex(ss.str());
}

template <class F>
auto in_stage(const char* stage, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

inline double nan_or(const nlohmann::json& j, const char* key) {
    return j.contains(key) && j.at(key).is_number() ? j.at(key).get<double>()
                                                    : std::numeric_limits<double>::quiet_NaN();
}

inline nlohmann::json number_or_null(double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); }

}  // namespace detail

/// Solve the macrostate; TES with match_energy first solves NTES and matches T.
inline TbaResult run_tba(const RunContext& ctx) {
    return detail::in_stage("tba", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const RunConfig& cfg = ctx.config;
        const double n = cfg.N / cfg.L;
        TbaResult r;
        if (!cfg.thermal()) {
            r.solution = solve_ntes(cfg.c, n);
        } else {
            if (cfg.match_energy) {
                const TbaSolution ntes = solve_ntes(cfg.c, n);
                r.ntes_energy = energy_density(ntes);
                ctx.info(fmt::format("tba: NTES energy density {:.6g}, matching temperature", r.ntes_energy));
                r.T = match_temperature(cfg.c, n, r.ntes_energy);
            } else {
                r.T = *cfg.T;
            }
            r.solution = solve_tes(cfg.c, r.T, n);
        }
        std::filesystem::create_directories(ctx.output);
        const std::string hash = ctx.hash();
        write_tba_csv(r.solution, (ctx.output / "tba.csv").string(), hash);
        r.seconds = detail::seconds_since(t0);
        auto j = tba_header(r.solution);
        j["n"] = n;
        j["matched_to_ntes_energy"] = detail::number_or_null(r.ntes_energy);
        j["config_hash"] = hash;
        j["timing"] = {{"seconds", r.seconds}};
        detail::write_json(ctx.output / "tba.json", j);
        ctx.info(fmt::format("tba: {} energy density {:.6g}{} ({:.1f} s)", to_string(r.solution.kind),
                             energy_density(r.solution),
                             cfg.thermal() ? fmt::format(", T = {:.6g}", r.T) : std::string(), r.seconds));
        return r;
    });
}

/// States to scan: the representative state (n_copies = 0) or sampled copies.
inline SampleResult run_sample(const RunContext& ctx, const TbaResult& tba) {
    return detail::in_stage("sample", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const RunConfig& cfg = ctx.config;
        const std::string hash = ctx.hash();
        SampleResult r;
        r.T = tba.T;
        const auto path = ctx.output / "states.jsonl";
        nlohmann::json m;
        if (cfg.n_copies == 0) {
            const QNConfig q = representative_qns(tba.solution, cfg.N, cfg.L);
            r.states.push_back(solve_bethe(cfg.params(), q));
            std::ofstream os(path);
            if (!os) throw Error("cannot write " + path.string());
            os << to_json_record(r.states.front()) << '\n';
            m = {{"mode", "representative"}, {"source", tba_header(tba.solution)}};
        } else {
            CopyEnsemble e = copy_ensemble(tba.solution, cfg.N, cfg.L, cfg.n_copies, cfg.energy_window, cfg.seed);
            write_ensemble(e, path);
            m = ensemble_manifest(e);
            m["mode"] = "copies";
            r.states = std::move(e.copies);
        }
        m["T"] = detail::number_or_null(r.T);
        m["config_hash"] = hash;
        r.seconds = detail::seconds_since(t0);
        m["timing"] = {{"seconds", r.seconds}};
        detail::write_json(ctx.output / "states.jsonl.manifest.json", m);
        ctx.info(fmt::format("sample: {} state(s) ({:.1f} s)", r.states.size(), r.seconds));
        return r;
    });
}

/// Reuse states.jsonl when it carries this config hash, else run tba and sample.
inline SampleResult load_or_sample(const RunContext& ctx) {
    const auto m = detail::read_json_if(ctx.output / "states.jsonl.manifest.json");
    if (detail::hash_matches(m, ctx.hash())) {
        SampleResult r;
        r.states = detail::in_stage("sample", [&] { return read_states(ctx.output / "states.jsonl"); });
        r.T = detail::nan_or(*m, "T");
        r.reused = true;
        ctx.info(fmt::format("sample: reusing {} state(s) from {}", r.states.size(), ctx.output.string()));
        return r;
    }
    return run_sample(ctx, run_tba(ctx));
}

/// Scan every state; checkpoints make an interrupted run resumable.
inline ScanStageResult run_scan(const RunContext& ctx, const SampleResult& sample) {
    return detail::in_stage("scan", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const RunConfig& cfg = ctx.config;
        const std::string hash = ctx.hash();
        ScanStageResult r;
        r.T = sample.T;
        std::filesystem::create_directories(ctx.output);
        for (size_t i = 0; i < sample.states.size(); ++i) {
            ScanOptions opt;
            opt.thresholds = cfg.scan;
            opt.shift = cfg.parity_shift;
            opt.workers = ctx.workers;
            opt.checkpoint = ctx.output / fmt::format("scan_{}.ckpt.jsonl", i);
            opt.resume = ctx.resume;
            opt.run_id = fmt::format("{}/{}", hash, i);
            opt.progress = [&, i](const ScanProgress& p) {
                ctx.info(fmt::format("scan[{}]: wave M={} N_p={} classes={} states={} ({:.0f} classes/s) "
                                     "saturation={:.6f}",
                                     i, p.wave.P_m + p.wave.P_l, p.wave.N_p, p.classes, p.states,
                                     p.seconds > 0 ? p.classes / p.seconds : 0.0, p.saturation));
            };
            const ScanReport rep = scan(sample.states[i], opt);
            write_lines_csv(rep, ctx.output / fmt::format("lines_{}.csv", i), hash);
            auto j = report_json(rep, hash);
            j["T"] = detail::number_or_null(r.T);
            j["kind"] = cfg.kind;
            detail::write_json(ctx.output / fmt::format("report_{}.json", i), j);
            ctx.info(fmt::format("scan[{}]: saturation {:.6f} ({}), {} lines", i, rep.saturation,
                                 to_string(rep.truncation), rep.lines.size()));
            r.sets.push_back(line_set(rep, cfg.kind, r.T));
            r.reports.push_back(std::move(j));
        }
        r.seconds = detail::seconds_since(t0);
        return r;
    });
}

/// Reuse lines_<i>.csv / report_<i>.json written under this config hash, else scan.
inline ScanStageResult load_or_scan(const RunContext& ctx) {
    const auto sm = detail::read_json_if(ctx.output / "states.jsonl.manifest.json");
    if (detail::hash_matches(sm, ctx.hash())) {
        ScanStageResult r;
        for (int i = 0;; ++i) {
            const auto rep = detail::read_json_if(ctx.output / fmt::format("report_{}.json", i));
            if (!detail::hash_matches(rep, ctx.hash())) break;
            LineSet s;
            s.params = ctx.config.params();
            s.kind = ctx.config.kind;
            s.T = detail::nan_or(*rep, "T");
            s.lines = read_lines_csv(ctx.output / fmt::format("lines_{}.csv", i));
            s.saturation = rep->at("saturation").get<double>();
            s.copies = 1;
            r.T = s.T;
            r.sets.push_back(std::move(s));
            r.reports.push_back(*rep);
        }
        const size_t expected = ctx.config.n_copies == 0 ? 1 : static_cast<size_t>(ctx.config.n_copies);
        if (r.sets.size() == expected) {
            ctx.info(fmt::format("scan: reusing {} report(s) from {}", r.sets.size(), ctx.output.string()));
            return r;
        }
    }
    return run_scan(ctx, load_or_sample(ctx));
}

/// Average copies, broaden, and write the grid and line shapes.
inline SpectrumResult run_spectrum(const RunContext& ctx, const ScanStageResult& scans) {
    return detail::in_stage("spectrum", [&] {
        const auto t0 = std::chrono::steady_clock::now();
        const RunConfig& cfg = ctx.config;
        const std::string hash = ctx.hash();
        const double ef = fermi_energy(cfg.N, cfg.L);
        const LineSet merged = average_copies(scans.sets);
        SpectrumResult r;
        r.grid = assemble_grid(merged, cfg.broadening.bin_over_eF * ef, cfg.broadening.sigma_over_eF * ef);
        const auto grid_path = ctx.output / "grid.csv";
        write_grid_csv(r.grid, grid_path, hash);
        r.grid_checksum = detail::file_checksum(grid_path);
        nlohmann::json shapes = nlohmann::json::array();
        for (double kk : cfg.broadening.line_shapes_k_over_kF) {
            const long k = std::lround(kf_to_k(kk, cfg.N));
            if (k < r.grid.k_values.front() || k > r.grid.k_values.back()) {
                ctx.info(fmt::format("spectrum: no lines at k/k_F = {:.4g}, line shape skipped", kk));
                continue;
            }
            LineShape s;
            try {
                s = line_shape(r.grid, k, true);
            } catch (const InvalidArgument&) {
                ctx.info(fmt::format("spectrum: empty column at k/k_F = {:.4g}, line shape skipped", kk));
                continue;
            }
            const auto name = fmt::format("line_shape_k{}.csv", k);
            write_line_shape_csv(s, cfg.N, cfg.L, ctx.output / name, hash);
            nlohmann::json peaks = nlohmann::json::array();
            for (const auto& p : find_peaks(s))
                peaks.push_back({{"omega_over_eF", p.omega / ef}, {"height", p.height * ef},
                                 {"prominence", p.prominence * ef}});
            shapes.push_back({{"k", k}, {"k_over_kF", k_over_kf(k, cfg.N)}, {"file", name}, {"peaks", peaks}});
        }
        r.manifest = grid_manifest(r.grid, hash);
        r.manifest["grid_checksum"] = r.grid_checksum;
        r.manifest["line_shapes"] = shapes;
        r.seconds = detail::seconds_since(t0);
        auto out = r.manifest;
        out["timing"] = {{"seconds", r.seconds}};
        detail::write_json(ctx.output / "spectrum.json", out);
        ctx.info(fmt::format("spectrum: saturation {:.6f}, negative-omega weight fraction {:.4f} ({:.1f} s)",
                             r.grid.saturation, negative_weight_fraction(r.grid), r.seconds));
        return r;
    });
}

/// All stages; returns the final manifest (also written to pipeline.json).
inline nlohmann::json run_pipeline(const RunContext& ctx) {
    const std::string hash = ctx.hash();
    nlohmann::json timing;
    SampleResult sample;
    std::optional<TbaResult> tba;
    const auto sm = detail::read_json_if(ctx.output / "states.jsonl.manifest.json");
    if (ctx.resume && detail::hash_matches(sm, hash)) {
        sample = load_or_sample(ctx);
    } else {
        tba = run_tba(ctx);
        timing["tba"] = tba->seconds;
        sample = run_sample(ctx, *tba);
        timing["sample"] = sample.seconds;
    }
    const ScanStageResult scans = run_scan(ctx, sample);
    timing["scan"] = scans.seconds;
    const SpectrumResult spec = run_spectrum(ctx, scans);
    timing["spectrum"] = spec.seconds;

    nlohmann::json sats = nlohmann::json::array();
    for (const auto& s : scans.sets) sats.push_back(s.saturation);
    nlohmann::json m;
    m["config"] = config_to_json(ctx.config);
    m["config_hash"] = hash;
    m["T"] = detail::number_or_null(sample.T);
    m["states"] = sample.states.size();
    m["saturation"] = spec.grid.saturation;
    m["saturation_per_state"] = sats;
    m["negative_weight_fraction"] = negative_weight_fraction(spec.grid);
    m["lines"] = [&] {
        size_t n = 0;
        for (const auto& s : scans.sets) n += s.lines.size();
        return n;
    }();
    m["grid_checksum"] = spec.grid_checksum;
    m["spectrum"] = spec.manifest;
    m["timing"] = timing;
    detail::write_json(ctx.output / "pipeline.json", m);
    return m;
}

}  // namespace llspec

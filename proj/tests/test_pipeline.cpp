// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include "llspec/pipeline.hpp"
#include "llspec/regression.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto d = fs::temp_directory_path() / ("llspec_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

llspec::RunContext context(json cfg, const fs::path& out, int workers = 1) {
    llspec::RunContext ctx;
    ctx.config = llspec::config_from_json(cfg);
    ctx.output = out;
    ctx.workers = workers;
    return ctx;
}

json small_ntes() {
    return {{"kind", "NTES"}, {"c", 2.0}, {"N", 6}, {"L", 6.0}, {"scan", {{"saturation_target", 0.999}}}};
}

json without_timing(json j) {
    j.erase("timing");
    return j;
}

json read(const fs::path& p) {
    std::ifstream is(p);
    return json::parse(is);
}

std::string first_line(const fs::path& p) {
    std::ifstream is(p);
    std::string s;
    std::getline(is, s);
    return s;
}

}  // namespace

TEST(Pipeline, SingleParticleToySaturatesExactly) {
    const auto out = fresh_dir("toy");
    const auto m = llspec::run_pipeline(context({{"kind", "NTES"}, {"c", 1.0}, {"N", 1}, {"L", 1.0}}, out));
    EXPECT_EQ(m.at("saturation").get<double>(), 1.0);
    EXPECT_EQ(m.at("lines").get<int>(), 1);
    EXPECT_TRUE(m.at("timing").contains("scan"));
}

TEST(Pipeline, SameConfigGivesIdenticalManifests) {
    const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
    json cfg = small_ntes();
    cfg["n_copies"] = 2;
    cfg["energy_window"] = 0.1;
    cfg["seed"] = 5;
    const auto ma = llspec::run_pipeline(context(cfg, a, 1));
    const auto mb = llspec::run_pipeline(context(cfg, b, 2));
    EXPECT_EQ(without_timing(ma), without_timing(mb));
    for (const char* f : {"spectrum.json", "states.jsonl.manifest.json", "report_0.json", "report_1.json", "tba.json"})
        EXPECT_EQ(without_timing(read(a / f)), without_timing(read(b / f))) << f;
    EXPECT_EQ(ma.at("states").get<int>(), 2);
}

TEST(Pipeline, EveryOutputCarriesTheConfigHash) {
    const auto out = fresh_dir("hash");
    auto ctx = context(small_ntes(), out);
    const auto m = llspec::run_pipeline(ctx);
    const std::string h = ctx.hash();
    EXPECT_EQ(m.at("config_hash"), h);
    for (const auto& e : fs::directory_iterator(out)) {
        const auto name = e.path().filename().string();
        SCOPED_TRACE(name);
        if (e.path().extension() == ".json") {
            EXPECT_EQ(read(e.path()).at("config_hash"), h);
        } else if (e.path().extension() == ".csv") {
            EXPECT_EQ(first_line(e.path()), "# config_hash=" + h);
        } else if (name == "scan_0.ckpt.jsonl") {
            EXPECT_NE(first_line(e.path()).find(h), std::string::npos);
        } else {
            EXPECT_EQ(name, "states.jsonl");  // described by states.jsonl.manifest.json
        }
    }
}

TEST(Pipeline, ResumeAfterInterruptionReproducesTheGrid) {
    const auto out = fresh_dir("resume");
    auto ctx = context(small_ntes(), out);
    const auto full = llspec::run_pipeline(ctx);

    // Simulate a kill mid-scan: keep half of the checkpoint plus a torn record.
    const auto ck = out / "scan_0.ckpt.jsonl";
    std::vector<std::string> lines;
    {
        std::ifstream is(ck);
        for (std::string s; std::getline(is, s);) lines.push_back(s);
    }
    ASSERT_GT(lines.size(), 4u);
    {
        std::ofstream os(ck, std::ios::trunc);
        for (size_t i = 0; i < lines.size() / 2; ++i) os << lines[i] << '\n';
        os << lines[lines.size() / 2].substr(0, 25);
    }
    for (const char* f : {"grid.csv", "spectrum.json", "pipeline.json", "lines_0.csv", "report_0.json"})
        fs::remove(out / f);

    ctx.resume = true;
    const auto resumed = llspec::run_pipeline(ctx);
    EXPECT_EQ(resumed.at("grid_checksum"), full.at("grid_checksum"));
    EXPECT_EQ(without_timing(resumed), without_timing(full));
}

TEST(Pipeline, StandaloneStagesReuseUpstreamFiles) {
    const auto out = fresh_dir("stages");
    auto ctx = context(small_ntes(), out);
    const auto sample = llspec::run_sample(ctx, llspec::run_tba(ctx));
    const auto reused = llspec::load_or_sample(ctx);
    EXPECT_TRUE(reused.reused);
    ASSERT_EQ(reused.states.size(), 1u);
    EXPECT_EQ(reused.states[0].qns, sample.states[0].qns);
    const auto scans = llspec::run_scan(ctx, reused);
    const auto direct = llspec::run_spectrum(ctx, scans);
    const auto loaded = llspec::run_spectrum(ctx, llspec::load_or_scan(ctx));
    EXPECT_EQ(direct.grid_checksum, loaded.grid_checksum);

    // A different config does not pick up these files.
    json other = small_ntes();
    other["seed"] = 99;
    auto ctx2 = context(other, out);
    EXPECT_FALSE(llspec::load_or_sample(ctx2).reused);
}

TEST(Pipeline, MatchedThermalRunRecordsTemperature) {
    const auto out = fresh_dir("tes");
    auto ctx = context({{"kind", "TES"}, {"c", 5.0}, {"N", 12}, {"L", 12.0}, {"match_energy", true}}, out);
    const auto r = llspec::run_tba(ctx);
    EXPECT_NEAR(r.T, 6.36, 0.1 * 6.36);
    EXPECT_NEAR(r.ntes_energy, 5.0, 0.05);
    const auto j = read(out / "tba.json");
    EXPECT_DOUBLE_EQ(j.at("T").get<double>(), r.T);
}

TEST(Pipeline, NonThermalTbaFilesShowPowerLawTail) {
    const auto out = fresh_dir("ntes_tba");
    (void)llspec::run_tba(context({{"kind", "NTES"}, {"c", 5.0}, {"N", 12}, {"L", 12.0}}, out));
    const auto j = read(out / "tba.json");
    EXPECT_NEAR(j.at("tail_exponent").get<double>(), 4.0, 0.2);
    EXPECT_TRUE(j.at("T").is_null());
    EXPECT_TRUE(fs::exists(out / "tba.csv"));
}

TEST(Pipeline, StageFailuresNameTheStage) {
    const auto out = fresh_dir("fail");
    // No sampled state lands inside an energy window this tight.
    auto ctx = context({{"kind", "NTES"}, {"c", 5.0}, {"N", 12}, {"L", 12.0}, {"n_copies", 3},
                        {"energy_window", 1e-9}},
                       out);
    try {
        (void)llspec::run_pipeline(ctx);
        FAIL() << "expected a stage error";
    } catch (const llspec::StageError& e) {
        EXPECT_EQ(e.stage(), "sample");
    }
}

TEST(Regression, ShippedSetPasses) {
    const auto set = llspec::load_regression_set(fs::path(LLSPEC_SOURCE_DIR) / "data" / "regression_set.json");
    const auto rep = llspec::run_regression(set);
    EXPECT_TRUE(rep.ok());
    long ff = 0, norms = 0, shells = 0;
    std::set<double> cs;
    for (const auto& c : rep.checks) {
        ff += c.kind == "form_factor";
        norms += c.kind == "norm";
        shells += c.kind == "shell";
        EXPECT_TRUE(c.passed) << c.kind << " " << c.id;
    }
    for (const auto& e : set.at("form_factors")) cs.insert(e.at("c").get<double>());
    EXPECT_GE(ff, 12);
    EXPECT_GE(norms, 1);
    EXPECT_GE(shells, 1);
    EXPECT_EQ(cs, (std::set<double>{0.1, 1.0, 5.0, 100.0}));
}

TEST(Regression, PerturbedRapidityFailsFormFactors) {
    const auto set = llspec::load_regression_set(fs::path(LLSPEC_SOURCE_DIR) / "data" / "regression_set.json");
    llspec::RegressionOptions opt;
    opt.perturb = 1e-3;
    const auto rep = llspec::run_regression(set, opt);
    EXPECT_FALSE(rep.ok());
    for (const auto& c : rep.checks) {
        if (c.kind == "form_factor") {
            EXPECT_FALSE(c.passed) << c.id;
        }
    }
}

TEST(Regression, EmptySetIsNotASuccess) {
    const auto d = fresh_dir("empty_rs");
    std::ofstream(d / "rs.json").close();
    const auto rep = llspec::run_regression(llspec::load_regression_set(d / "rs.json"));
    EXPECT_TRUE(rep.checks.empty());
    EXPECT_FALSE(rep.ok());
}

TEST(Regression, FreezeMatchesFrozenValues) {
    json set = llspec::load_regression_set(fs::path(LLSPEC_SOURCE_DIR) / "data" / "regression_set.json");
    json small = {{"tolerance", 1e-6},
                  {"norms", json::array({set.at("norms").at(0)})},
                  {"form_factors", json::array({set.at("form_factors").at(0)})}};
    const json refrozen = llspec::freeze_regression_set(small);
    EXPECT_NEAR(refrozen["norms"][0]["norm_sq"].get<double>() / small["norms"][0]["norm_sq"].get<double>(), 1.0,
                1e-12);
    EXPECT_NEAR(refrozen["form_factors"][0]["weight"].get<double>() /
                    small["form_factors"][0]["weight"].get<double>(),
                1.0, 1e-12);
}

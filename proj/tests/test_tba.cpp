// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "llspec/tba.hpp"

using namespace llspec;

namespace {

void expect_well_formed(const TbaSolution& s) {
    const int m = s.grid.size();
    ASSERT_GE(m, 200);
    for (int i = 0; i < m; ++i) {
        const auto k = static_cast<size_t>(i);
        const auto r = static_cast<size_t>(m - 1 - i);
        // 0 < theta < 1 holds exactly iff eps is finite; theta itself rounds to 1 near the NTES origin.
        EXPECT_TRUE(std::isfinite(s.epsilon[k]));
        EXPECT_GT(s.filling[k], 0.0);
        EXPECT_LE(s.filling[k], 1.0);
        EXPECT_GT(s.density_fn[k], 0.0);
        EXPECT_EQ(s.epsilon[k], s.epsilon[r]);
        EXPECT_EQ(s.density_fn[k], s.density_fn[r]);
        EXPECT_EQ(s.grid.nodes[k], -s.grid.nodes[r]);
    }
    EXPECT_LE(s.fixed_point_residual, 1e-10);
    EXPECT_NEAR(particle_density(s), s.target_density, 1e-6);
}

}  // namespace

TEST(Grid, SymmetricOpenAndComplete) {
    const auto g = make_grid(20.0, 0.3, 3.0);
    ASSERT_GE(g.size(), 200);
    double total = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        total += g.weights[static_cast<size_t>(i)];
        if (i > 0) {
            EXPECT_GT(g.nodes[static_cast<size_t>(i)], g.nodes[static_cast<size_t>(i - 1)]);
        }
    }
    EXPECT_NEAR(total, 40.0, 1e-11);
    EXPECT_GT(g.pos_node(0), 0.0);
    EXPECT_THROW((void)make_grid(-1.0, 1.0, 1.0), InvalidArgument);
}

TEST(SolveTes, ReferencePointIsWellFormed) {
    const auto s = solve_tes(5.0, 6.36, 1.0);
    expect_well_formed(s);
    EXPECT_EQ(s.kind, TbaKind::TES);
}

TEST(SolveTes, TailIsGaussianAndStableUnderCutoffDoubling) {
    const auto s = solve_tes(1.0, 1.15, 1.0);
    expect_well_formed(s);
    const auto fit = tail_exponent(s);
    EXPECT_TRUE(fit.exponential);
    EXPECT_GT(fit.rms_power, 10.0);
    EXPECT_LT(fit.rms_exponential, 0.05 * fit.rms_power);
    // ln rho vs l^2 slope -> -1/T; compare two cutoffs on a common window.
    TbaOptions o;
    o.cutoff = 2 * s.grid.cutoff;
    const auto s2 = solve_tes(1.0, 1.15, 1.0, o);
    auto slope = [](const TbaSolution& t) {
        double a = 0, b = 0;
        for (int i = t.grid.half(); i < t.grid.size(); ++i) {
            const auto k = static_cast<size_t>(i);
            if (t.grid.nodes[k] < 8.0) {
                a = t.grid.nodes[k];
            }
            if (t.grid.nodes[k] < 12.0) {
                b = t.grid.nodes[k];
            }
        }
        auto at = [&](double x) {
            for (int i = t.grid.half(); i < t.grid.size(); ++i)
                if (t.grid.nodes[static_cast<size_t>(i)] == x) return std::log(t.density_fn[static_cast<size_t>(i)]);
            return 0.0;
        };
        return (at(b) - at(a)) / (b * b - a * a);
    };
    EXPECT_NEAR(slope(s), -1.0 / 1.15, 0.02);
    EXPECT_NEAR(slope(s) / slope(s2), 1.0, 1e-6);
}

TEST(SolveTes, RejectsBadInput) {
    EXPECT_THROW((void)solve_tes(0.0, 1.0, 1.0), InvalidArgument);
    EXPECT_THROW((void)solve_tes(1.0, -1.0, 1.0), InvalidArgument);
    EXPECT_THROW((void)solve_tes(1.0, 1.0, 0.0), InvalidArgument);
}

TEST(SolveTes, NearZeroTemperatureFillsAFermiSea) {
    const auto s = solve_tes(5.0, 1e-3, 1.0);
    EXPECT_NEAR(particle_density(s), 1.0, 1e-6);
    for (int i = s.grid.half(); i < s.grid.size(); ++i) {
        const auto k = static_cast<size_t>(i);
        if (s.grid.nodes[k] < 1.0) {
            EXPECT_GT(s.filling[k], 1 - 1e-12);
        }
        if (s.grid.nodes[k] > 4.0) {
            EXPECT_LT(s.filling[k], 1e-12);
        }
    }
}

class NtesEnergy : public ::testing::TestWithParam<double> {};

TEST_P(NtesEnergy, EqualsInitialStateEnergy) {
    const double c = GetParam();
    const auto s = solve_ntes(c, 1.0);
    expect_well_formed(s);
    EXPECT_NEAR(energy_density(s), c, 1e-2 * c);
    // Tighter than required; a drift here signals a grid or tail regression.
    EXPECT_NEAR(energy_density(s), c, 1e-4 * c);
}

INSTANTIATE_TEST_SUITE_P(Couplings, NtesEnergy, ::testing::Values(0.1, 1.0, 5.0));

TEST(SolveNtes, FillingPeaksAtTheOrigin) {
    // theta saturates to 1 in double precision near 0, so the strict
    // ordering is asserted on eps and the weak one on theta.
    const auto s = solve_ntes(1.0, 1.0);
    const auto h = static_cast<size_t>(s.grid.half());
    for (size_t i = h + 1; i < s.filling.size(); ++i) {
        EXPECT_GT(s.epsilon[i], s.epsilon[h]);
        EXPECT_LE(s.filling[i], s.filling[h]);
    }
    EXPECT_GT(s.filling[h], 1.0 - 1e-9);
    EXPECT_FALSE(s.origin_clamped);
}

TEST(SolveNtes, EnergyIsGridConverged) {
    const auto s = solve_ntes(5.0, 1.0);
    TbaOptions wide;
    wide.cutoff = 2 * s.grid.cutoff;
    TbaOptions fine;
    fine.grid.points_per_panel = 20;
    fine.grid.body_width *= 0.5;
    fine.grid.kernel_panels *= 0.5;
    fine.grid.growth *= 0.5;
    const double e = energy_density(s);
    EXPECT_NEAR(energy_density(solve_ntes(5.0, 1.0, wide)) / e, 1.0, 1e-3);
    const auto f = solve_ntes(5.0, 1.0, fine);
    EXPECT_GT(f.grid.size(), s.grid.size());
    EXPECT_NEAR(energy_density(f) / e, 1.0, 1e-3);
}

TEST(SolveTes, EnergyIsGridConverged) {
    const auto s = solve_tes(1.0, 1.15, 1.0);
    TbaOptions wide;
    wide.cutoff = 2 * s.grid.cutoff;
    TbaOptions fine;
    fine.grid.points_per_panel = 20;
    fine.grid.body_width *= 0.5;
    const double e = energy_density(s);
    EXPECT_NEAR(energy_density(solve_tes(1.0, 1.15, 1.0, wide)) / e, 1.0, 1e-3);
    EXPECT_NEAR(energy_density(solve_tes(1.0, 1.15, 1.0, fine)) / e, 1.0, 1e-3);
}

TEST(EnergyDensity, ZeroDensityGivesZero) {
    auto s = solve_ntes(1.0, 1.0);
    std::fill(s.density_fn.begin(), s.density_fn.end(), 0.0);
    s.tail_energy = 0.0;
    EXPECT_EQ(energy_density(s), 0.0);
}

TEST(TailExponent, NtesDecaysAsInverseFourthPower) {
    const auto fit = tail_exponent(solve_ntes(5.0, 1.0));
    EXPECT_NEAR(fit.exponent, 4.0, 0.2);
    EXPECT_FALSE(fit.exponential);
}

TEST(TailExponent, SyntheticPowerLawIsExact) {
    auto s = solve_ntes(1.0, 1.0);
    for (size_t i = 0; i < s.density_fn.size(); ++i) s.density_fn[i] = std::pow(s.grid.nodes[i], -4.0);
    EXPECT_NEAR(tail_exponent(s).exponent, 4.0, 1e-12);
}

TEST(TailExponent, StrongCouplingProxyShowsInverseSquareRegime) {
    const double c = 1e3;
    const auto s = solve_ntes(c, 1.0);
    const auto fit = tail_exponent(s, TailWindow{c / 100, c / 10});
    EXPECT_NEAR(fit.exponent, 2.0, 0.2);
    // Beyond c the density crosses over to the generic 1/l^4 decay.
    EXPECT_NEAR(tail_exponent(s).exponent, 4.0, 0.2);
}

TEST(TailExponent, RequiresEnoughNodes) {
    const auto s = solve_ntes(1.0, 1.0);
    EXPECT_THROW((void)tail_exponent(s, TailWindow{5.0, 5.01}), InvalidArgument);
}

TEST(MatchTemperature, ReproducesReferenceTemperatures) {
    const std::vector<std::pair<double, double>> points{{0.1, 0.13}, {1.0, 1.15}, {5.0, 6.36}};
    for (const auto& [c, t_ref] : points) {
        const double e = energy_density(solve_ntes(c, 1.0));
        const double t = match_temperature(c, 1.0, e);
        EXPECT_NEAR(t / t_ref, 1.0, 0.10) << "c=" << c;
        EXPECT_NEAR(energy_density(solve_tes(c, t, 1.0)) / e, 1.0, 1e-3);
    }
}

TEST(MatchTemperature, ReferenceTemperatureEnergyOffsetIsBounded) {
    // At the quoted temperature the thermal energy sits a few percent below
    // the quench energy; the offset grows with c.
    const double gap = 1.0 - energy_density(solve_tes(5.0, 6.36, 1.0)) / energy_density(solve_ntes(5.0, 1.0));
    EXPECT_GT(gap, 0.0);
    EXPECT_LT(gap, 0.07);
}

TEST(MatchTemperature, UnreachableTargetFailsToBracket) {
    MatchOptions mo;
    mo.max_expansions = 3;
    EXPECT_THROW((void)match_temperature(5.0, 1.0, 1e-3, {}, mo), BracketError);
    EXPECT_THROW((void)match_temperature(5.0, 1.0, -1.0), InvalidArgument);
}

TEST(Export, CsvAndHeader) {
    const auto s = solve_ntes(5.0, 1.0);
    const auto path = std::filesystem::temp_directory_path() / "llspec_tba_test.csv";
    write_tba_csv(s, path.string(), "abc");
    std::ifstream is(path);
    std::string first, second;
    std::getline(is, first);
    std::getline(is, second);
    EXPECT_EQ(first, "# config_hash=abc");
    EXPECT_EQ(second, "lambda,epsilon,filling,rho");
    const auto h = tba_header(s);
    for (const char* key : {"kind", "c", "T", "multiplier", "density", "energy_density", "tail_exponent", "Lambda", "M"})
        EXPECT_TRUE(h.contains(key)) << key;
    EXPECT_TRUE(h["T"].is_null());
    EXPECT_EQ(h["kind"], "NTES");
    std::filesystem::remove(path);
}

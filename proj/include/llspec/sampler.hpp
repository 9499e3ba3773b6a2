// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file sampler.hpp
 * @brief Finite-size quantum numbers from a TBA macrostate.
 *
 * Slots are placed through the counting function
 *
 *     x(l) = L int_0^l (rho + rho_h) = (L / 2pi) [ l + int dm rho(m) 2 atan((l - m)/c) ],
 *
 * so slot I sits at the rapidity l(I) with x(l(I)) = I, and is filled with
 * probability theta(l(I)).
 */

#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <unordered_set>

#include "llspec/bethe.hpp"
#include "llspec/tba.hpp"

namespace llspec {

/// Slot geometry of a TBA solution at system length L.
class SlotMap {
public:
    SlotMap(const TbaSolution& sol, double L) : sol_(&sol), L_(L) {
        if (!(L > 0.0)) throw InvalidArgument("SlotMap: L must be > 0");
        const int m = sol.grid.size();
        // Cumulative particle number L int_{-inf}^{l} rho on node midpoints.
        cum_.resize(static_cast<size_t>(m));
        double acc = 0.5 * L * sol.tail_density;
        for (int i = 0; i < m; ++i) {
            const auto k = static_cast<size_t>(i);
            acc += 0.5 * L * sol.grid.weights[k] * sol.density_fn[k];
            cum_[k] = acc;
            acc += 0.5 * L * sol.grid.weights[k] * sol.density_fn[k];
        }
        total_ = acc + 0.5 * L * sol.tail_density;
    }

    [[nodiscard]] double length() const noexcept { return L_; }

    /// Counting function x(l).
    [[nodiscard]] double counting(double l) const {
        const auto& g = sol_->grid;
        double s = l;
        for (size_t i = 0; i < g.nodes.size(); ++i)
            s += g.weights[i] * sol_->density_fn[i] * 2.0 * std::atan((l - g.nodes[i]) / sol_->c);
        return L_ / kTwoPi * s;
    }

    /// l(I): inverse of the counting function (strictly increasing).
    [[nodiscard]] double rapidity_of_slot(double slot) const {
        auto f = [&](double l) { return counting(l) - slot; };
        double lo = kTwoPi * slot / L_, hi = lo;
        double step = std::max(1.0, std::abs(lo));
        while (f(lo) > 0) lo -= step, step *= 2;
        step = std::max(1.0, std::abs(hi));
        while (f(hi) < 0) hi += step, step *= 2;
        boost::math::tools::eps_tolerance<double> tol(50);
        std::uintmax_t it = 200;
        const auto r = boost::math::tools::toms748_solve(f, lo, hi, tol, it);
        return 0.5 * (r.first + r.second);
    }

    /// theta at an arbitrary rapidity, by linear interpolation of eps on the grid.
    [[nodiscard]] double filling_at(double l) const {
        const auto& nodes = sol_->grid.nodes;
        const double a = std::abs(l);
        const auto& eps = sol_->epsilon;
        const size_t h = static_cast<size_t>(sol_->grid.half());
        if (a <= nodes[h]) return sol_->filling[h];
        if (a >= nodes.back()) {
            // Beyond the cutoff: continue the last panel's slope in eps.
            const size_t m = nodes.size();
            const double slope = (eps[m - 1] - eps[m - 2]) / (nodes[m - 1] - nodes[m - 2]);
            return filling_of(eps[m - 1] + slope * (a - nodes[m - 1]));
        }
        const auto it = std::upper_bound(nodes.begin() + static_cast<std::ptrdiff_t>(h), nodes.end(), a);
        const auto j = static_cast<size_t>(it - nodes.begin());
        const double t = (a - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
        return filling_of((1 - t) * eps[j - 1] + t * eps[j]);
    }

    /// Cumulative occupied count L int_{-inf}^{l} rho (piecewise linear between nodes).
    [[nodiscard]] double occupied_below(double l) const {
        const auto& nodes = sol_->grid.nodes;
        if (l <= nodes.front()) return cum_.front();
        if (l >= nodes.back()) return cum_.back();
        const auto it = std::upper_bound(nodes.begin(), nodes.end(), l);
        const auto j = static_cast<size_t>(it - nodes.begin());
        const double t = (l - nodes[j - 1]) / (nodes[j] - nodes[j - 1]);
        return (1 - t) * cum_[j - 1] + t * cum_[j];
    }

    [[nodiscard]] double total_occupied() const noexcept { return total_; }
    [[nodiscard]] const TbaSolution& solution() const noexcept { return *sol_; }

private:
    const TbaSolution* sol_;
    double L_;
    std::vector<double> cum_;
    double total_ = 0.0;
};

namespace detail {

inline void check_density(const TbaSolution& sol, int n, double L) {
    if (n < 1) throw InvalidArgument("sampler: N must be >= 1");
    const double nl = n / L;
    if (std::abs(nl - sol.target_density) > 0.02 * sol.target_density)
        throw InvalidArgument(fmt::format("sampler: N/L = {} differs from the TBA density {} by more than 2%", nl,
                                          sol.target_density));
}

}  // namespace detail

/**
 * Deterministic configuration following rho: walking the slots upward, slot I
 * is occupied when the cumulative count C(I + 1/2) = L int_{-inf}^{l(I + 1/2)} rho
 * crosses the next half-integer.  theta <= 1 allows at most one crossing per
 * slot, and rho being even makes the result mirror symmetric.
 */
[[nodiscard]] inline QNConfig representative_qns(const TbaSolution& sol, int n, double L) {
    detail::check_density(sol, n, L);
    const SlotMap map(sol, L);
    const double scale = n / map.total_occupied();  // absorbs the <= 2% density mismatch
    auto placed_below = [&](double x) {
        return static_cast<long>(std::floor(scale * map.occupied_below(map.rapidity_of_slot(x)) + 0.5));
    };
    const int top = 2 * static_cast<int>(std::ceil(map.counting(sol.grid.cutoff))) + 2;
    const int start = parity_ok(-top, n) ? -top : -top - 1;
    std::vector<int> twice;
    long before = placed_below(0.5 * start - 0.5);
    for (int tw = start; tw <= -start; tw += 2) {
        const long after = placed_below(0.5 * tw + 0.5);
        if (after > before) twice.push_back(tw);
        before = after;
    }
    if (static_cast<int>(twice.size()) != n)
        throw Error(fmt::format("representative_qns: placed {} of {} particles", twice.size(), n));
    return QNConfig::from_twice(std::move(twice));
}

struct SlotTable {
    std::vector<int> twice;           ///< doubled slot labels, ascending
    std::vector<double> probability;  ///< theta(l(I))
};

/// Parity-valid slots with |l(I)| within the TBA cutoff, with their fillings.
[[nodiscard]] inline SlotTable slot_table(const TbaSolution& sol, int n, double L) {
    detail::check_density(sol, n, L);
    const SlotMap map(sol, L);
    const double xmax = map.counting(sol.grid.cutoff);
    SlotTable t;
    const int top = static_cast<int>(std::floor(2.0 * xmax));
    for (int tw = -top; tw <= top; ++tw) {
        if (!parity_ok(tw, n)) continue;
        t.twice.push_back(tw);
        t.probability.push_back(map.filling_at(map.rapidity_of_slot(0.5 * tw)));
    }
    if (static_cast<int>(t.twice.size()) < n) throw InvalidArgument("sampler: fewer slots than particles");
    return t;
}

/**
 * Independent Bernoulli(p_I) occupations conditioned on exactly N particles,
 * sampled exactly by a backward pass over "k particles left in slots i.."
 * weights (rows rescaled to stay in range).
 */
[[nodiscard]] inline QNConfig sample_from_table(const SlotTable& t, int n, std::mt19937_64& rng) {
    const size_t s = t.twice.size();
    const auto nn = static_cast<size_t>(n);
    std::vector<std::vector<double>> w(s + 1, std::vector<double>(nn + 1, 0.0));
    w[s][0] = 1.0;
    for (size_t i = s; i-- > 0;) {
        const double p = std::clamp(t.probability[i], 0.0, 1.0);
        double mx = 0.0;
        for (size_t k = 0; k <= nn; ++k) {
            w[i][k] = (1 - p) * w[i + 1][k] + (k > 0 ? p * w[i + 1][k - 1] : 0.0);
            mx = std::max(mx, w[i][k]);
        }
        if (mx > 0) for (double& v : w[i]) v /= mx;
    }
    if (!(w[0][nn] > 0.0)) throw Error("sample_qns: no configuration with exactly N particles has nonzero weight");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<int> out;
    size_t k = nn;
    for (size_t i = 0; i < s && k > 0; ++i) {
        const double p = std::clamp(t.probability[i], 0.0, 1.0);
        const double take = p * w[i + 1][k - 1];
        const double skip = (1 - p) * w[i + 1][k];
        if (uni(rng) * (take + skip) < take) {
            out.push_back(t.twice[i]);
            --k;
        }
    }
    return QNConfig::from_twice(std::move(out));
}

namespace detail {

inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

}  // namespace detail

/// One configuration drawn from the filling function, reproducible from @p seed.
[[nodiscard]] inline QNConfig sample_qns(const TbaSolution& sol, int n, double L, std::uint64_t seed) {
    auto rng = detail::seeded_rng(seed, 0);
    return sample_from_table(slot_table(sol, n, L), n, rng);
}

// ============================================================================
// Copy ensembles
// ============================================================================

struct CopyEnsemble {
    std::vector<BetheState> copies;
    std::uint64_t seed = 0;
    double energy_window = 0.05;
    double target_energy = 0.0;   ///< energy_density(source) * L
    int attempts = 0;
    int duplicates = 0;
    double acceptance_rate = 0.0;
    nlohmann::json source;        ///< TBA header of the macrostate
};

struct EnsembleOptions {
    double min_acceptance = 0.01;
    int min_attempts_before_check = 100;
    int max_attempts_per_copy = 1000;
    BetheSolverOptions solver;
};

/**
 * Draw configurations with sub-seeds (seed, 0), (seed, 1), ... and keep the
 * distinct ones whose Bethe energy lies within a relative @p window of
 * energy_density(sol) L, until @p n_copies are kept.
 */
[[nodiscard]] inline CopyEnsemble copy_ensemble(const TbaSolution& sol, int n, double L, int n_copies, double window,
                                                std::uint64_t seed, const EnsembleOptions& opt = {}) {
    if (n_copies < 1) throw InvalidArgument("copy_ensemble: n_copies must be >= 1");
    if (!(window > 0.0)) throw InvalidArgument("copy_ensemble: window must be > 0");
    const SlotTable table = slot_table(sol, n, L);
    CopyEnsemble ens;
    ens.seed = seed;
    ens.energy_window = window;
    ens.target_energy = energy_density(sol) * L;
    ens.source = tba_header(sol);
    const ModelParams params{sol.c, L, n};
    std::unordered_set<QNConfig, QNConfigHash> seen;
    while (static_cast<int>(ens.copies.size()) < n_copies) {
        ++ens.attempts;
        auto rng = detail::seeded_rng(seed, static_cast<std::uint64_t>(ens.attempts - 1));
        QNConfig q = sample_from_table(table, n, rng);
        if (!seen.insert(q).second) {
            ++ens.duplicates;
        } else {
            BetheState st = solve_bethe(params, q, std::nullopt, opt.solver);
            if (std::abs(st.energy - ens.target_energy) <= window * ens.target_energy)
                ens.copies.push_back(std::move(st));
        }
        if (ens.attempts >= opt.min_attempts_before_check &&
            static_cast<double>(ens.copies.size()) / ens.attempts < opt.min_acceptance)
            throw Error(fmt::format("copy_ensemble: acceptance {:.3g}% below {:.3g}% after {} draws (window too tight)",
                                    100.0 * static_cast<double>(ens.copies.size()) / ens.attempts,
                                    100.0 * opt.min_acceptance, ens.attempts));
        if (ens.attempts >= opt.max_attempts_per_copy * n_copies)
            throw Error("copy_ensemble: attempt budget exhausted");
    }
    ens.acceptance_rate = static_cast<double>(ens.copies.size()) / ens.attempts;
    return ens;
}

[[nodiscard]] inline nlohmann::json ensemble_manifest(const CopyEnsemble& e) {
    return {{"seed", e.seed},
            {"energy_window", e.energy_window},
            {"target_energy", e.target_energy},
            {"copies", e.copies.size()},
            {"attempts", e.attempts},
            {"duplicates", e.duplicates},
            {"acceptance_rate", e.acceptance_rate},
            {"source", e.source}};
}

/// JSON-lines file of BetheState records plus "<path>.manifest.json".
inline void write_ensemble(const CopyEnsemble& e, const std::filesystem::path& path, const std::string& config_hash = {}) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path.string());
    for (const auto& s : e.copies) os << to_json_record(s) << '\n';
    auto m = ensemble_manifest(e);
    if (!config_hash.empty()) m["config_hash"] = config_hash;
    std::ofstream ms(path.string() + ".manifest.json");
    ms << m.dump(2) << '\n';
}

[[nodiscard]] inline std::vector<BetheState> read_states(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path.string());
    std::vector<BetheState> out;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) out.push_back(from_json_record(nlohmann::json::parse(line)));
    return out;
}

}  // namespace llspec

// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file spectra.hpp
 * @brief k-omega grids, line shapes and equilibrium diagnostics from spectral lines.
 *
 * Momentum columns are the exact integers k (units 2 pi / L); only omega is
 * broadened.  Grid values are spectral-weight densities per unit omega, so
 * sum_k int d(omega) value equals the summed line weight; the correlator
 * itself is g1 = 2 pi L * value.
 */

#pragma once

#include <filesystem>
#include <fstream>

#include "llspec/scan.hpp"

namespace llspec {

// ---- units -------------------------------------------------------------------

[[nodiscard]] inline double fermi_momentum(int n, double L) { return kPi * n / L; }
[[nodiscard]] inline double fermi_energy(int n, double L) {
    const double kf = fermi_momentum(n, L);
    return kf * kf;
}
/// Integer momentum (units 2 pi / L) in units of k_F = pi N / L.
[[nodiscard]] inline double k_over_kf(long k, int n) { return 2.0 * static_cast<double>(k) / n; }
[[nodiscard]] inline double kf_to_k(double k_over, int n) { return 0.5 * k_over * n; }
[[nodiscard]] inline double omega_over_ef(double omega, int n, double L) { return omega / fermi_energy(n, L); }
[[nodiscard]] inline double ef_to_omega(double w_over, int n, double L) { return w_over * fermi_energy(n, L); }

// ---- merged line sets ----------------------------------------------------------

/// Lines of one or more scans of the same (c, L, N, kind), weights already averaged.
struct LineSet {
    ModelParams params;
    std::string kind;  ///< "TES" or "NTES"
    double T = std::numeric_limits<double>::quiet_NaN();
    std::vector<SpectralLine> lines;
    double saturation = 0.0;
    int copies = 0;
};

[[nodiscard]] inline LineSet line_set(const ScanReport& r, std::string kind, double T = std::numeric_limits<double>::quiet_NaN()) {
    return {r.params, std::move(kind), T, r.lines, r.saturation, 1};
}

/// Uniform average over copies: concatenate and divide weights by the copy count.
[[nodiscard]] inline LineSet average_copies(std::span<const LineSet> sets) {
    if (sets.empty()) throw InvalidArgument("average_copies: no reports");
    LineSet out;
    const auto& first = sets.front();
    out.params = first.params;
    out.kind = first.kind;
    out.T = first.T;
    int copies = 0;
    for (const auto& s : sets) {
        if (s.params.c != first.params.c || s.params.L != first.params.L || s.params.N != first.params.N ||
            s.kind != first.kind)
            throw InvalidArgument("average_copies: reports differ in (c, L, N, kind)");
        copies += s.copies;
    }
    double sat = 0.0;
    for (const auto& s : sets) {
        // Each input may itself be an average of s.copies scans.
        const double scale = static_cast<double>(s.copies) / copies;
        sat += scale * s.saturation;
        for (auto l : s.lines) {
            l.weight *= scale;
            out.lines.push_back(l);
        }
    }
    out.saturation = sat;
    out.copies = copies;
    return out;
}

// ---- grids -------------------------------------------------------------------

struct SpectrumGrid {
    ModelParams params;
    std::string kind;
    double T = std::numeric_limits<double>::quiet_NaN();
    std::vector<long> k_values;         ///< contiguous integers, units 2 pi / L
    std::vector<double> omega_edges;    ///< uniform bin edges
    std::vector<std::vector<double>> values;  ///< [k column][omega bin], weight per unit omega
    double sigma = 0.0;
    double saturation = 0.0;
    int copies = 1;

    [[nodiscard]] double bin_width() const { return omega_edges[1] - omega_edges[0]; }
    [[nodiscard]] size_t bins() const { return omega_edges.size() - 1; }
    [[nodiscard]] double center(size_t b) const { return 0.5 * (omega_edges[b] + omega_edges[b + 1]); }
    [[nodiscard]] std::optional<size_t> column(long k) const {
        if (k_values.empty() || k < k_values.front() || k > k_values.back()) return std::nullopt;
        return static_cast<size_t>(k - k_values.front());
    }
    [[nodiscard]] double total() const {
        double acc = 0.0;
        for (const auto& col : values)
            for (double v : col) acc += v;
        return acc * bin_width();
    }
};

/**
 * Deposit each line as weight x Gaussian(omega; omega_line, sigma) into its k
 * column.  Bin masses come from erf differences over +-8 sigma and are
 * renormalized per line, so the grid holds exactly the line weight.
 */
[[nodiscard]] inline SpectrumGrid assemble_grid(const LineSet& set, double omega_bin_width, double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("assemble_grid: sigma must be > 0");
    if (!(omega_bin_width > 0.0)) throw InvalidArgument("assemble_grid: bin width must be > 0");
    if (set.lines.empty()) throw InvalidArgument("assemble_grid: no lines");
    constexpr double reach = 8.0;
    SpectrumGrid g;
    g.params = set.params;
    g.kind = set.kind;
    g.T = set.T;
    g.sigma = sigma;
    g.saturation = set.saturation;
    g.copies = set.copies;

    long kmin = set.lines.front().k, kmax = kmin;
    double wmin = set.lines.front().omega, wmax = wmin;
    for (const auto& l : set.lines) {
        kmin = std::min(kmin, l.k);
        kmax = std::max(kmax, l.k);
        wmin = std::min(wmin, l.omega);
        wmax = std::max(wmax, l.omega);
    }
    for (long k = kmin; k <= kmax; ++k) g.k_values.push_back(k);
    const double lo = std::floor((wmin - reach * sigma) / omega_bin_width) * omega_bin_width;
    const auto nb = static_cast<size_t>(std::ceil((wmax + reach * sigma - lo) / omega_bin_width));
    for (size_t b = 0; b <= nb; ++b) g.omega_edges.push_back(lo + static_cast<double>(b) * omega_bin_width);
    g.values.assign(g.k_values.size(), std::vector<double>(nb, 0.0));

    const double inv = 1.0 / (std::sqrt(2.0) * sigma);
    std::vector<double> mass;
    for (const auto& l : set.lines) {
        auto& col = g.values[static_cast<size_t>(l.k - kmin)];
        const auto b0 = static_cast<size_t>(std::max(0.0, std::floor((l.omega - reach * sigma - lo) / omega_bin_width)));
        const auto b1 = std::min(nb, static_cast<size_t>(std::ceil((l.omega + reach * sigma - lo) / omega_bin_width)));
        mass.assign(b1 - b0, 0.0);
        double sum = 0.0;
        for (size_t b = b0; b < b1; ++b) {
            const double m = 0.5 * (std::erf((g.omega_edges[b + 1] - l.omega) * inv) -
                                     std::erf((g.omega_edges[b] - l.omega) * inv));
            mass[b - b0] = m;
            sum += m;
        }
        for (size_t b = b0; b < b1; ++b) col[b] += l.weight * mass[b - b0] / (sum * omega_bin_width);
    }
    return g;
}

/// (weight at omega < 0) / (total weight), from the lines themselves.
[[nodiscard]] inline double negative_weight_fraction(std::span<const SpectralLine> lines) {
    double neg = 0.0, all = 0.0;
    for (const auto& l : lines) {
        all += l.weight;
        if (l.omega < 0.0) neg += l.weight;
    }
    return all > 0.0 ? neg / all : 0.0;
}

/// Same on a grid: bins are split at omega = 0 in proportion to their overlap.
[[nodiscard]] inline double negative_weight_fraction(const SpectrumGrid& g) {
    double neg = 0.0, all = 0.0;
    for (const auto& col : g.values)
        for (size_t b = 0; b < col.size(); ++b) {
            all += col[b];
            const double a = g.omega_edges[b], z = g.omega_edges[b + 1];
            if (z <= 0.0) neg += col[b];
            else if (a < 0.0) neg += col[b] * (-a) / (z - a);
        }
    return all > 0.0 ? neg / all : 0.0;
}

// ---- line shapes ----------------------------------------------------------------

struct LineShape {
    long k = 0;
    std::vector<double> omega;  ///< bin centers
    std::vector<double> g;      ///< weight per unit omega (divided by its integral if rescaled)
    bool rescaled = false;

    [[nodiscard]] double integral() const {
        if (omega.size() < 2) return 0.0;
        double acc = 0.0;
        for (double v : g) acc += v;
        return acc * (omega[1] - omega[0]);
    }
};

[[nodiscard]] inline LineShape line_shape(const SpectrumGrid& grid, long k, bool rescale) {
    const auto col = grid.column(k);
    if (!col) throw InvalidArgument(fmt::format("line_shape: k = {} is not a grid column", k));
    LineShape s;
    s.k = k;
    s.g = grid.values[*col];
    for (size_t b = 0; b < grid.bins(); ++b) s.omega.push_back(grid.center(b));
    if (rescale) {
        const double norm = s.integral();
        if (!(norm > 0.0)) throw InvalidArgument(fmt::format("line_shape: column k = {} is empty", k));
        for (double& v : s.g) v /= norm;
        s.rescaled = true;
    }
    return s;
}

struct Peak {
    double omega = 0.0;
    double height = 0.0;
    double prominence = 0.0;
};

/**
 * Local maxima whose topographic prominence is at least @p min_prominence
 * times the global maximum, sorted by height (highest first).
 */
[[nodiscard]] inline std::vector<Peak> find_peaks(const LineShape& s, double min_prominence = 0.05) {
    const auto& g = s.g;
    const size_t n = g.size();
    std::vector<Peak> out;
    if (n == 0) return out;
    const double top = *std::max_element(g.begin(), g.end());
    if (!(top > 0.0)) return out;
    for (size_t i = 0; i < n; ++i) {
        const double left = i > 0 ? g[i - 1] : -1.0;
        const double right = i + 1 < n ? g[i + 1] : -1.0;
        if (!(g[i] > left && g[i] >= right)) continue;
        // Lowest point between i and the nearest higher sample on each side.
        double lmin = g[i], rmin = g[i];
        bool lhigher = false, rhigher = false;
        for (size_t j = i; j-- > 0;) {
            if (g[j] > g[i]) { lhigher = true; break; }
            lmin = std::min(lmin, g[j]);
        }
        for (size_t j = i + 1; j < n; ++j) {
            if (g[j] > g[i]) { rhigher = true; break; }
            rmin = std::min(rmin, g[j]);
        }
        double base;
        if (lhigher && rhigher) base = std::max(lmin, rmin);
        else if (lhigher) base = lmin;
        else if (rhigher) base = rmin;
        else base = std::min(lmin, rmin);
        const double prom = g[i] - base;
        if (prom >= min_prominence * top) out.push_back({s.omega[i], g[i], prom});
    }
    std::sort(out.begin(), out.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
    return out;
}

// ---- detailed balance ------------------------------------------------------------

namespace detail {

inline double sample_column(const SpectrumGrid& g, size_t col, double omega) {
    const double x = (omega - g.omega_edges.front()) / g.bin_width() - 0.5;
    if (x < 0.0 || x > static_cast<double>(g.bins() - 1)) return 0.0;
    const auto i = static_cast<size_t>(std::floor(x));
    const double t = x - static_cast<double>(i);
    const auto& v = g.values[col];
    return i + 1 < v.size() ? (1 - t) * v[i] + t * v[i + 1] : v[i];
}

}  // namespace detail

/**
 * Aggregate deviation from the thermal ratio
 *
 *     g(-k, mu - w) = exp(-w / T) g(k, mu + w),   w > 0,
 *
 * as sum |b - a| / sum (a + b) over all cells, with a = exp(-w/T) g(k, mu + w)
 * and b = g(-k, mu - w).  Zero when the ratio holds everywhere.
 */
[[nodiscard]] inline double dbr_residual(const SpectrumGrid& grid, double T, double mu) {
    if (!(T > 0.0)) throw InvalidArgument("dbr_residual: T must be > 0");
    double num = 0.0, den = 0.0;
    for (size_t c = 0; c < grid.k_values.size(); ++c) {
        const auto mirror = grid.column(-grid.k_values[c]);
        for (size_t b = 0; b < grid.bins(); ++b) {
            const double w = grid.center(b) - mu;
            if (w <= 0.0) continue;
            const double a = std::exp(-w / T) * grid.values[c][b];
            const double m = mirror ? detail::sample_column(grid, *mirror, mu - w) : 0.0;
            num += std::abs(m - a);
            den += a + m;
        }
    }
    return den > 0.0 ? num / den : 0.0;
}

// ---- export ------------------------------------------------------------------------

[[nodiscard]] inline nlohmann::json grid_manifest(const SpectrumGrid& g, const std::string& config_hash = {}) {
    nlohmann::json j = {{"c", g.params.c},
                        {"N", g.params.N},
                        {"L", g.params.L},
                        {"kind", g.kind},
                        {"T", std::isnan(g.T) ? nlohmann::json(nullptr) : nlohmann::json(g.T)},
                        {"sigma", g.sigma},
                        {"sigma_over_eF", omega_over_ef(g.sigma, g.params.N, g.params.L)},
                        {"omega_bin_width", g.bin_width()},
                        {"saturation", g.saturation},
                        {"copies", g.copies},
                        {"negative_weight_fraction", negative_weight_fraction(g)},
                        {"k_unit", "k_F = pi N / L"},
                        {"omega_unit", "eps_F = k_F^2"},
                        {"omega_convention", "E_base - E_intermediate, no chemical-potential shift"},
                        {"g1_column", "spectral weight per unit omega/eps_F; g1 = 2 pi L eps_F^-1 * value"}};
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    return j;
}

inline void write_grid_csv(const SpectrumGrid& g, const std::filesystem::path& path, const std::string& config_hash = {}) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
    os << "k_over_kF,omega_over_eF,g1\n";
    const double ef = fermi_energy(g.params.N, g.params.L);
    for (size_t c = 0; c < g.k_values.size(); ++c)
        for (size_t b = 0; b < g.bins(); ++b)
            os << fmt::format("{:.17g},{:.17g},{:.17g}\n", k_over_kf(g.k_values[c], g.params.N),
                              g.center(b) / ef, g.values[c][b] * ef);
}

inline void write_line_shape_csv(const LineShape& s, int n, double L, const std::filesystem::path& path,
                                 const std::string& config_hash = {}) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
    os << "# k_over_kF=" << fmt::format("{:.17g}", k_over_kf(s.k, n)) << " rescaled=" << (s.rescaled ? 1 : 0)
       << '\n';
    os << "omega_over_eF,g\n";
    const double ef = fermi_energy(n, L);
    for (size_t i = 0; i < s.omega.size(); ++i)
        os << fmt::format("{:.17g},{:.17g}\n", s.omega[i] / ef, s.g[i] * ef);
}

}  // namespace llspec

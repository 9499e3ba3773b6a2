// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file oracle.hpp
 * @brief Brute-force coordinate Bethe ansatz for tiny N.
 *
 * Independent ground truth for the determinant formulas: explicit
 * permutation-sum wavefunctions integrated by nested Gauss-Legendre rules on
 * the ordered simplex 0 < x_1 < ... < x_n < L, where every integrand is an
 * entire function (the cusps of |psi|^2 sit on the simplex faces).
 */

#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <complex>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

#include "llspec/bethe.hpp"

namespace llspec::oracle {

inline constexpr int kMaxParticles = 4;

/// Permutation-sum representation of the coordinate wavefunction.
class CoordinateWavefunction {
public:
    explicit CoordinateWavefunction(const BetheState& state)
        : lam_(state.rapidities), c_(state.params.c) {
        const int n = static_cast<int>(lam_.size());
        if (n > kMaxParticles) throw InvalidArgument("oracle: N > 4 is not supported");
        std::vector<int> perm(static_cast<size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        do {
            int inversions = 0;
            for (int j = 0; j < n; ++j)
                for (int k = j + 1; k < n; ++k) inversions += perm[j] > perm[k];
            std::complex<double> a = (inversions % 2) ? -1.0 : 1.0;
            for (int j = 0; j < n; ++j)
                for (int k = j + 1; k < n; ++k)
                    a *= std::complex<double>(lam_[perm[k]] - lam_[perm[j]], -c_);
            perms_.push_back(perm);
            amps_.push_back(a);
        } while (std::next_permutation(perm.begin(), perm.end()));
    }

    [[nodiscard]] int size() const noexcept { return static_cast<int>(lam_.size()); }

    /// Value at positions already sorted ascending.
    [[nodiscard]] std::complex<double> sorted(std::span<const double> x) const {
        const size_t n = lam_.size();
        if (n == 0) return 1.0;
        std::complex<double> phase_table[kMaxParticles][kMaxParticles];
        for (size_t j = 0; j < n; ++j)
            for (size_t m = 0; m < n; ++m)
                phase_table[j][m] = std::polar(1.0, lam_[m] * x[j]);
        std::complex<double> total = 0.0;
        for (size_t p = 0; p < perms_.size(); ++p) {
            std::complex<double> term = amps_[p];
            for (size_t j = 0; j < n; ++j) term *= phase_table[j][static_cast<size_t>(perms_[p][j])];
            total += term;
        }
        return total;
    }

    /// Value at arbitrary positions (bosonic, so the order is irrelevant).
    [[nodiscard]] std::complex<double> operator()(std::vector<double> x) const {
        if (x.size() != lam_.size()) throw InvalidArgument("wavefunction: wrong number of positions");
        std::sort(x.begin(), x.end());
        return sorted(x);
    }

private:
    std::vector<double> lam_;
    double c_;
    std::vector<std::vector<int>> perms_;
    std::vector<std::complex<double>> amps_;
};

[[nodiscard]] inline std::complex<double> wavefunction(const BetheState& state, std::vector<double> x) {
    return CoordinateWavefunction(state)(std::move(x));
}

/// Nested composite Gauss-Legendre rule over 0 < x_1 < ... < x_n < L.
template <class F>
[[nodiscard]] std::complex<double> simplex_integrate(F&& f, int n, double L, int panels) {
    using Rule = boost::math::quadrature::gauss<double, 20>;
    if (n == 0) return f(std::span<const double>{});
    std::vector<double> nodes, weights;  // rule on [-1, 1]
    for (size_t i = 0; i < Rule::abscissa().size(); ++i) {
        const double a = Rule::abscissa()[i];
        const double w = Rule::weights()[i];
        nodes.push_back(a);
        weights.push_back(w);
        if (a != 0.0) {
            nodes.push_back(-a);
            weights.push_back(w);
        }
    }
    std::vector<double> x(static_cast<size_t>(n));
    std::function<std::complex<double>(int, double)> rec = [&](int d, double lo) -> std::complex<double> {
        std::complex<double> acc = 0.0;
        const double width = (L - lo) / panels;
        for (int pnl = 0; pnl < panels; ++pnl) {
            const double a = lo + pnl * width;
            const double half = 0.5 * width;
            for (size_t i = 0; i < nodes.size(); ++i) {
                x[static_cast<size_t>(d)] = a + half * (nodes[i] + 1.0);
                const double w = half * weights[i];
                acc += w * (d + 1 == n ? f(std::span<const double>(x)) : rec(d + 1, x[static_cast<size_t>(d)]));
            }
        }
        return acc;
    };
    return rec(0, 0.0);
}

struct OracleOptions {
    int start_panels = 1;
    int max_refinements = 3;
    double rel_tol = 1e-9;
};

namespace detail {

template <class F>
std::complex<double> converged_integral(F&& f, int n, double L, const OracleOptions& opt) {
    int panels = opt.start_panels;
    auto prev = simplex_integrate(f, n, L, panels);
    for (int r = 0; r < opt.max_refinements; ++r) {
        panels *= 2;
        auto next = simplex_integrate(f, n, L, panels);
        if (std::abs(next - prev) <= opt.rel_tol * std::abs(next)) return next;
        prev = next;
    }
    throw ConvergenceError("oracle: quadrature did not converge under panel refinement",
                           std::abs(prev));
}

}  // namespace detail

/// integral over [0, L]^N of |psi|^2.
[[nodiscard]] inline double norm_direct(const BetheState& state, const OracleOptions& opt = {}) {
    const int n = state.size();
    if (n == 0) return 1.0;
    CoordinateWavefunction psi(state);
    auto f = [&](std::span<const double> x) -> std::complex<double> { return std::norm(psi.sorted(x)); };
    const double fact = std::tgamma(n + 1.0);
    return fact * detail::converged_integral(f, n, state.params.L, opt).real();
}

/// sqrt(N) integral conj(psi_bra(y)) psi_ket(y, 0) dy over [0, L]^{N-1}.
[[nodiscard]] inline std::complex<double> overlap_field(const BetheState& bra, const BetheState& ket,
                                                       const OracleOptions& opt = {}) {
    if (bra.size() + 1 != ket.size()) throw InvalidArgument("overlap_field: particle counts must differ by one");
    if (bra.params.c != ket.params.c || bra.params.L != ket.params.L)
        throw InvalidArgument("overlap_field: bra and ket have different (c, L)");
    const int n = ket.size();
    CoordinateWavefunction pb(bra);
    CoordinateWavefunction pk(ket);
    std::vector<double> xk(static_cast<size_t>(n));
    auto f = [&](std::span<const double> y) -> std::complex<double> {
        xk[0] = 0.0;
        for (size_t j = 0; j < y.size(); ++j) xk[j + 1] = y[j];
        return std::conj(pb.sorted(y)) * pk.sorted(xk);
    };
    const double pref = std::sqrt(static_cast<double>(n)) * std::tgamma(static_cast<double>(n));
    return pref * detail::converged_integral(f, n - 1, ket.params.L, opt);
}

/// Oracle version of the normalized weight |<bra|Psi(0)|ket>|^2 / (||bra||^2 ||ket||^2).
[[nodiscard]] inline double weight_direct(const BetheState& bra, const BetheState& ket,
                                          const OracleOptions& opt = {}) {
    return std::norm(overlap_field(bra, ket, opt)) / (norm_direct(bra, opt) * norm_direct(ket, opt));
}

/**
 * Every configuration of ref.size() particles (same parity as ref) that
 * differs from ref by at most @p max_moves displaced particles with total
 * displacement |P_m| + |P_l| <= @p max_momentum, found by exhaustive search
 * over all subsets of a slot window.  Displacements pair holes and new
 * particles in ascending order.
 */
[[nodiscard]] inline std::set<QNConfig> shell_brute_force(const QNConfig& ref, int max_momentum, int max_moves) {
    const int n = ref.size();
    std::set<QNConfig> out;
    if (n == 0) {
        out.insert(ref);
        return out;
    }
    if (n > 6) throw InvalidArgument("shell_brute_force: reference too large for exhaustive search");
    const int lo = ref.twice(0) - 2 * max_momentum;
    const int hi = ref.twice(n - 1) + 2 * max_momentum;
    std::vector<int> slots;
    for (int t = lo; t <= hi; t += 2) slots.push_back(t);
    const int m = static_cast<int>(slots.size());
    std::vector<int> pick(static_cast<size_t>(n));
    std::iota(pick.begin(), pick.end(), 0);
    const auto& r = ref.twice_values();
    while (true) {
        std::vector<int> q(static_cast<size_t>(n));
        for (int j = 0; j < n; ++j) q[static_cast<size_t>(j)] = slots[static_cast<size_t>(pick[static_cast<size_t>(j)])];
        std::vector<int> holes, parts;
        for (int t : r)
            if (std::find(q.begin(), q.end(), t) == q.end()) holes.push_back(t);
        for (int t : q)
            if (std::find(r.begin(), r.end(), t) == r.end()) parts.push_back(t);
        int moved = 0;
        for (size_t i = 0; i < holes.size(); ++i) moved += std::abs(parts[i] - holes[i]) / 2;
        if (static_cast<int>(holes.size()) <= max_moves && moved <= max_momentum)
            out.insert(QNConfig::from_twice(q));
        // next n-subset of m slots in lexicographic order
        int j = n - 1;
        while (j >= 0 && pick[static_cast<size_t>(j)] == m - n + j) --j;
        if (j < 0) break;
        ++pick[static_cast<size_t>(j)];
        for (int k = j + 1; k < n; ++k) pick[static_cast<size_t>(k)] = pick[static_cast<size_t>(k - 1)] + 1;
    }
    return out;
}

}  // namespace llspec::oracle

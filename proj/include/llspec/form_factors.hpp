// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file form_factors.hpp
 * @brief Field form factor <mu_{N-1}| Psi(0) |lambda_N> in determinant form.
 *
 * In the norm convention of bethe.hpp the modulus is
 *
 *   |F|^2 = N! (N-1)! prod_{j<k}^N ((l_j-l_k)^2 + c^2)^2 (l_j-l_k)^2
 *           prod_{j<k}^{N-1} (m_j-m_k)^2 / prod_{j,k} (m_j-l_k)^2  (det U)^2
 *
 *   U_jk = delta_jk 2 Im V_j + [prod_a (m_a-l_j) / prod_{a!=j} (l_a-l_j)]
 *                              (K(l_j-l_k) - K(l_p-l_k)),   j, k != p
 *   V_j  = prod_a (m_a - l_j + ic) / prod_a (l_a - l_j + ic)
 *
 * for any choice of the excluded index p.  Row j of U is divided by
 * prod_a (m_a - l_j), which cancels the matching factors of the Cauchy
 * denominator and leaves only prod_a (m_a - l_p) outside the determinant.
 */

#pragma once

#include <Eigen/LU>
#include <complex>
#include <limits>
#include <vector>

#include "llspec/bethe.hpp"

namespace llspec {

struct FormFactorValue {
    double log_magnitude = -std::numeric_limits<double>::infinity();
    double phase = 0.0;          ///< 0 or pi; only |F|^2 enters the weights
    double rcond = 1.0;          ///< reciprocal condition estimate of the reduced matrix
    bool near_coincidence = false;  ///< some |mu_a - lambda_j| < 1e-8 (1 + |lambda_j|)
};

/// Vacuum state of the N = 0 sector (unit norm).
[[nodiscard]] inline BetheState vacuum_state(double c, double L) {
    BetheState s;
    s.params = ModelParams{c, L, 0};
    return s;
}

namespace detail {

struct SignedLog {
    double log_abs = 0.0;
    int sign = 1;
    void mul(double x) {
        if (x == 0.0) {
            log_abs = -std::numeric_limits<double>::infinity();
            sign = 0;
            return;
        }
        log_abs += std::log(std::abs(x));
        if (x < 0) sign = -sign;
    }
};

}  // namespace detail

/**
 * Determinant-representation value of <bra| Psi(0) |ket>, bra holding one
 * particle less than ket.  Both states must share (c, L).
 */
[[nodiscard]] inline FormFactorValue field_form_factor(const BetheState& bra, const BetheState& ket) {
    if (bra.params.c != ket.params.c || bra.params.L != ket.params.L)
        throw InvalidArgument("field_form_factor: bra and ket have different (c, L)");
    if (bra.size() + 1 != ket.size())
        throw InvalidArgument("field_form_factor: bra must have exactly one particle less than ket");

    const double c = ket.params.c;
    const auto& lam = ket.rapidities;
    const auto& mu = bra.rapidities;
    const int n = ket.size();
    const int m = n - 1;

    FormFactorValue out;
    out.log_magnitude = 0.0;
    if (n == 1) return out;  // <0|Psi(0)|lambda> = 1 in this convention

    // Excluded column: the ket rapidity farthest from every bra rapidity.
    int p = 0;
    double best_gap = -1.0;
    double min_gap = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
        double gap = std::numeric_limits<double>::infinity();
        for (int a = 0; a < m; ++a) gap = std::min(gap, std::abs(mu[a] - lam[j]));
        min_gap = std::min(min_gap, gap / (1.0 + std::abs(lam[j])));
        if (gap > best_gap) {
            best_gap = gap;
            p = j;
        }
    }
    out.near_coincidence = min_gap < 1e-8;

    detail::SignedLog pre;
    pre.log_abs = 0.5 * (std::lgamma(n + 1.0) + std::lgamma(m + 1.0));
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
            const double d = lam[j] - lam[k];
            pre.log_abs += std::log(d * d + c * c) + std::log(std::abs(d));
        }
    for (int j = 0; j < m; ++j)
        for (int k = j + 1; k < m; ++k) pre.log_abs += std::log(std::abs(mu[j] - mu[k]));
    for (int a = 0; a < m; ++a) pre.mul(1.0 / (mu[a] - lam[p]));

    // Reduced matrix, rows/cols indexed by ket rapidities other than p.
    Eigen::MatrixXd u(m, m);
    double row_scale_log = 0.0;
    std::vector<double> row_log(static_cast<size_t>(m));
    std::vector<int> row_sign(static_cast<size_t>(m));
    std::vector<double> diag_log(static_cast<size_t>(m));
    std::vector<int> diag_sign(static_cast<size_t>(m));
    const std::complex<double> ic(0.0, c);
    int r = 0;
    for (int j = 0; j < n; ++j) {
        if (j == p) continue;
        // log V_j (complex) and prod_a (mu_a - l_j), prod_{a != j} (l_a - l_j)
        std::complex<double> log_v = -std::log(ic);
        detail::SignedLog num, den;
        for (int a = 0; a < m; ++a) {
            log_v += std::log(std::complex<double>(mu[a] - lam[j], c));
            num.mul(mu[a] - lam[j]);
        }
        for (int a = 0; a < n; ++a) {
            if (a == j) continue;
            log_v -= std::log(std::complex<double>(lam[a] - lam[j], c));
            den.mul(lam[a] - lam[j]);
        }
        const double s = std::sin(log_v.imag());
        diag_log[static_cast<size_t>(r)] = std::log(2.0) + log_v.real() + std::log(std::abs(s)) - num.log_abs;
        diag_sign[static_cast<size_t>(r)] = (s < 0 ? -1 : 1) * num.sign;
        row_log[static_cast<size_t>(r)] = -den.log_abs;
        row_sign[static_cast<size_t>(r)] = den.sign;
        ++r;
    }
    r = 0;
    for (int j = 0; j < n; ++j) {
        if (j == p) continue;
        const auto rr = static_cast<size_t>(r);
        // Scale the row by its largest log-magnitude so entries stay O(1).
        double kmax = 0.0;
        for (int k = 0; k < n; ++k) {
            if (k == p) continue;
            kmax = std::max(kmax, std::abs(kernel(lam[j] - lam[k], c) - kernel(lam[p] - lam[k], c)));
        }
        const double scale = std::max(diag_log[rr], row_log[rr] + std::log(std::max(kmax, 1e-300)));
        row_scale_log += scale;
        int col = 0;
        for (int k = 0; k < n; ++k) {
            if (k == p) continue;
            double v = row_sign[rr] * std::exp(row_log[rr] - scale) *
                       (kernel(lam[j] - lam[k], c) - kernel(lam[p] - lam[k], c));
            if (col == r) v += diag_sign[rr] * std::exp(diag_log[rr] - scale);
            u(r, col) = v;
            ++col;
        }
        ++r;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(u);
    const auto& lumat = lu.matrixLU();
    detail::SignedLog det;
    det.sign = lu.permutationP().determinant();
    for (Eigen::Index i = 0; i < m; ++i) det.mul(lumat(i, i));
    out.rcond = lu.rcond();
    out.log_magnitude = pre.log_abs + det.log_abs + row_scale_log;
    out.phase = (pre.sign * det.sign < 0) ? kPi : 0.0;
    return out;
}

/// |F|^2 / (||bra||^2 ||ket||^2).
[[nodiscard]] inline double normalized_weight(const BetheState& bra, const BetheState& ket) {
    const auto ff = field_form_factor(bra, ket);
    return std::exp(2.0 * ff.log_magnitude - bra.log_norm_sq - ket.log_norm_sq);
}

}  // namespace llspec

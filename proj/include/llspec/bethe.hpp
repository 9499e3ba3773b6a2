// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file bethe.hpp
 * @brief Bethe equations of the Lieb-Liniger gas: solver, Gaudin matrix, norm.
 *
 * The equations are solved in the form
 *
 *     f_j(lambda) = L lambda_j + sum_k 2 atan((lambda_j - lambda_k)/c) - 2 pi I_j = 0,
 *
 * whose Jacobian is exactly the Gaudin matrix.  The reported residual is
 * max_j |f_j| / L, i.e. the defect of the equations written with 2/L in front
 * of the arctan sum.
 *
 * Norm convention: the coordinate wavefunction in the sector x_1 < ... < x_N is
 *
 *     psi(x) = sum_P (-1)^[P] prod_{j<k} (lambda_Pk - lambda_Pj - i c) exp(i sum_j lambda_Pj x_j)
 *
 * and its squared norm over [0, L]^N is N! prod_{j<k} ((lambda_j-lambda_k)^2 + c^2) det G.
 */

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "llspec/core.hpp"

namespace llspec {

struct BetheState {
    ModelParams params;
    QNConfig qns;
    std::vector<double> rapidities;
    double residual = 0.0;
    double energy = 0.0;
    double momentum = 0.0;
    double log_norm_sq = 0.0;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(rapidities.size()); }
};

struct BetheSolverOptions {
    double target_residual = 1e-12;
    double accept_residual = 1e-10;
    int max_iterations = 100;
    /// Below this c the solver starts from a continuation path in c.
    double continuation_below = 1.0;
};

namespace detail {

inline double bethe_defect(const ModelParams& p, std::span<const int> twice_qns,
                           std::span<const double> lam, std::vector<double>& f) {
    const size_t n = lam.size();
    f.assign(n, 0.0);
    double worst = 0.0;
    for (size_t j = 0; j < n; ++j) {
        double s = p.L * lam[j] - kPi * twice_qns[j];
        for (size_t k = 0; k < n; ++k)
            if (k != j) s += 2.0 * std::atan((lam[j] - lam[k]) / p.c);
        f[j] = s;
        worst = std::max(worst, std::abs(s));
    }
    return worst / p.L;
}

inline void fill_gaudin(double L, double c, std::span<const double> lam, Eigen::MatrixXd& g) {
    const auto n = static_cast<Eigen::Index>(lam.size());
    g.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double diag = L;
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == j) continue;
            const double kv = kernel(lam[static_cast<size_t>(j)] - lam[static_cast<size_t>(k)], c);
            diag += kv;
            g(j, k) = -kv;
        }
        g(j, j) = diag;
    }
}

struct NewtonOutcome {
    std::vector<double> lambda;
    double residual = 0.0;
    bool converged = false;
};

/// Damped Newton iteration on the Bethe equations at fixed (c, L).
inline NewtonOutcome bethe_newton(const ModelParams& p, std::span<const int> twice_qns,
                                  std::vector<double> lam, const BetheSolverOptions& opt) {
    std::vector<double> f;
    std::vector<double> trial(lam.size());
    std::vector<double> ftrial;
    Eigen::MatrixXd g;
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(lam.size()));
    double res = bethe_defect(p, twice_qns, lam, f);
    for (int it = 0; it < opt.max_iterations && res > opt.target_residual; ++it) {
        fill_gaudin(p.L, p.c, lam, g);
        for (size_t j = 0; j < lam.size(); ++j) rhs(static_cast<Eigen::Index>(j)) = -f[j];
        Eigen::LLT<Eigen::MatrixXd> llt(g);
        if (llt.info() != Eigen::Success) break;
        const Eigen::VectorXd step = llt.solve(rhs);
        double t = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            for (size_t j = 0; j < lam.size(); ++j)
                trial[j] = lam[j] + t * step(static_cast<Eigen::Index>(j));
            const double r = bethe_defect(p, twice_qns, trial, ftrial);
            if (r < res || r <= opt.target_residual) {
                lam.swap(trial);
                f.swap(ftrial);
                const double prev = res;
                res = r;
                improved = true;
                // Round-off floor: a full step that no longer helps means we are done.
                if (prev - r < 1e-3 * prev && r <= opt.accept_residual) it = opt.max_iterations;
                break;
            }
        }
        if (!improved) break;
    }
    return {std::move(lam), res, res <= opt.accept_residual};
}

}  // namespace detail

/// Free-particle rapidities 2 pi I / L.
[[nodiscard]] inline std::vector<double> free_rapidities(const QNConfig& qns, double L) {
    std::vector<double> lam(static_cast<size_t>(qns.size()));
    for (int j = 0; j < qns.size(); ++j) lam[static_cast<size_t>(j)] = kPi * qns.twice(j) / L;
    return lam;
}

/// Gaudin matrix G_jk = delta_jk [L + sum_l K(lambda_j - lambda_l)] - K(lambda_j - lambda_k).
[[nodiscard]] inline Eigen::MatrixXd gaudin_matrix(const BetheState& s) {
    Eigen::MatrixXd g;
    detail::fill_gaudin(s.params.L, s.params.c, s.rapidities, g);
    return g;
}

/// ln of the squared norm; throws if the Gaudin matrix is not positive definite.
[[nodiscard]] inline double log_norm_sq(const ModelParams& p, std::span<const double> lam) {
    const auto n = lam.size();
    if (n == 0) return 0.0;
    double acc = std::lgamma(static_cast<double>(n) + 1.0);
    for (size_t j = 0; j < n; ++j)
        for (size_t k = j + 1; k < n; ++k) {
            const double d = lam[j] - lam[k];
            acc += std::log(d * d + p.c * p.c);
        }
    Eigen::MatrixXd g;
    detail::fill_gaudin(p.L, p.c, lam, g);
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success)
        throw Error("log_norm_sq: Gaudin matrix is not positive definite (unsolved state?)");
    const auto& lmat = llt.matrixL();
    double logdet = 0.0;
    for (Eigen::Index j = 0; j < g.rows(); ++j) logdet += 2.0 * std::log(lmat(j, j));
    return acc + logdet;
}

[[nodiscard]] inline double log_norm_sq(const BetheState& s) {
    return log_norm_sq(s.params, s.rapidities);
}

namespace detail {

inline BetheState finish_state(const ModelParams& p, const QNConfig& qns, NewtonOutcome&& out) {
    BetheState s;
    s.params = p;
    s.qns = qns;
    s.rapidities = std::move(out.lambda);
    s.residual = out.residual;
    for (size_t j = 1; j < s.rapidities.size(); ++j)
        if (!(s.rapidities[j] > s.rapidities[j - 1]))
            throw ConvergenceError("solve_bethe: rapidities lost their ordering", out.residual);
    for (double l : s.rapidities) {
        s.energy += l * l;
        s.momentum += l;
    }
    s.log_norm_sq = log_norm_sq(p, s.rapidities);
    return s;
}

}  // namespace detail

/**
 * Solve the Bethe equations for the given quantum numbers.
 *
 * Starts from @p guess when supplied, otherwise from free values; for c below
 * BetheSolverOptions::continuation_below (or when the direct attempt fails)
 * the roots are followed from large c down to the target in geometric steps.
 */
[[nodiscard]] inline BetheState solve_bethe(const ModelParams& params, const QNConfig& qns,
                                            std::optional<std::vector<double>> guess = std::nullopt,
                                            const BetheSolverOptions& opt = {}) {
    params.validate();
    if (qns.size() != params.N)
        throw InvalidArgument(fmt::format("solve_bethe: {} quantum numbers for N = {}",
                                          qns.size(), params.N));
    qns.validate();
    if (guess && guess->size() != static_cast<size_t>(params.N))
        throw InvalidArgument("solve_bethe: guess has the wrong length");

    const auto& tq = qns.twice_values();
    double best = 0.0;
    if (guess || params.c >= opt.continuation_below) {
        auto start = guess ? *guess : free_rapidities(qns, params.L);
        auto out = detail::bethe_newton(params, tq, std::move(start), opt);
        if (out.converged) return detail::finish_state(params, qns, std::move(out));
        best = out.residual;
    }

    // Continuation from the weakly dressed regime.
    double c_run = std::max(8.0, 8.0 * params.c);
    std::vector<double> lam = free_rapidities(qns, params.L);
    constexpr double ratio = 0.7;
    while (true) {
        ModelParams step = params;
        step.c = std::max(c_run, params.c);
        auto out = detail::bethe_newton(step, tq, lam, opt);
        if (!out.converged)
            throw ConvergenceError(
                fmt::format("solve_bethe: continuation stalled at c = {} (residual {:.3e})", step.c,
                            out.residual),
                std::max(best, out.residual));
        lam = std::move(out.lambda);
        if (step.c == params.c) {
            out.lambda = lam;
            return detail::finish_state(params, qns, std::move(out));
        }
        c_run *= ratio;
    }
}

// ============================================================================
// Serialization
// ============================================================================

/// One-line JSON record; rapidities carry 17 significant digits.
[[nodiscard]] inline std::string to_json_record(const BetheState& s) {
    std::string out = fmt::format(R"({{"c":{:.17g},"L":{:.17g},"N":{},"qns":[)", s.params.c,
                                  s.params.L, s.params.N);
    for (int j = 0; j < s.qns.size(); ++j) {
        if (j) out += ',';
        const int t = s.qns.twice(j);
        out += (t % 2 == 0) ? fmt::format("{}", t / 2) : fmt::format("{:.1f}", 0.5 * t);
    }
    out += "],\"rapidities\":[";
    for (size_t j = 0; j < s.rapidities.size(); ++j) {
        if (j) out += ',';
        out += fmt::format("{:.17g}", s.rapidities[j]);
    }
    out += fmt::format(R"(],"residual":{:.17g},"energy":{:.17g},"momentum":{:.17g},"log_norm_sq":{:.17g}}})",
                       s.residual, s.energy, s.momentum, s.log_norm_sq);
    return out;
}

[[nodiscard]] inline BetheState from_json_record(const nlohmann::json& j) {
    BetheState s;
    s.params.c = j.at("c").get<double>();
    s.params.L = j.at("L").get<double>();
    s.params.N = j.at("N").get<int>();
    s.qns = QNConfig::from_values(j.at("qns").get<std::vector<double>>());
    s.rapidities = j.at("rapidities").get<std::vector<double>>();
    s.residual = j.at("residual").get<double>();
    s.energy = j.at("energy").get<double>();
    s.momentum = j.at("momentum").get<double>();
    s.log_norm_sq = j.at("log_norm_sq").get<double>();
    if (s.qns.size() != s.params.N || s.size() != s.params.N)
        throw InvalidArgument("BetheState record: inconsistent particle count");
    return s;
}

}  // namespace llspec

// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file tba.hpp
 * @brief Thermal (Yang-Yang) and post-quench TBA equations on a quadrature grid.
 *
 *   TES:   eps(l) = (l^2 - h)/T                          - (1/2pi) K * ln(1 + e^-eps)
 *   NTES:  eps(l) = ln[(l/c)^2 ((l/c)^2 + 1/4)] - h'     - (1/2pi) K * ln(1 + e^-eps)
 *   rho(l) = theta(l)/(2pi) [1 + K * rho (l)],  theta = 1/(1 + e^eps)
 *
 * Both driving terms are even, so everything is solved on the positive half
 * line with the folded kernel K(l - m) + K(l + m).  The grid is open at the
 * origin, where the NTES driving term has its logarithmic singularity.
 */

#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "llspec/core.hpp"

namespace llspec {

// ============================================================================
// Grid
// ============================================================================

/// Symmetric composite Gauss-Legendre grid on (-cutoff, cutoff), excluding 0.
struct QuadratureGrid {
    std::vector<double> nodes;    ///< strictly increasing, nodes[M-1-i] = -nodes[i]
    std::vector<double> weights;
    double cutoff = 0.0;

    [[nodiscard]] int size() const noexcept { return static_cast<int>(nodes.size()); }
    [[nodiscard]] int half() const noexcept { return size() / 2; }
    /// i-th positive node (ascending).
    [[nodiscard]] double pos_node(int i) const { return nodes[static_cast<size_t>(half() + i)]; }
    [[nodiscard]] double pos_weight(int i) const { return weights[static_cast<size_t>(half() + i)]; }
};

struct GridOptions {
    int points_per_panel = 12;
    int inner_levels = 14;      ///< geometric panels shrinking toward the origin
    double inner_ratio = 3.0;
    double body_width = 0.5;    ///< panel width floor away from the origin
    double growth = 0.2;        ///< panel width = growth * left edge in the outer region
    double kernel_panels = 1.5; ///< panel width <= kernel_panels * c inside the body
};

/**
 * Panels: geometric toward 0 below min(1, c)/2; inside the body (|l| < body)
 * width min(kernel_panels c, body_width); beyond it geometric growth.  The
 * kernel-width cap is dropped in the tail, where the filling is small and the
 * local part of the convolution is negligible.
 */
[[nodiscard]] inline QuadratureGrid make_grid(double cutoff, double c, double body,
                                              const GridOptions& opt = {}) {
    if (!(cutoff > 0.0) || !(c > 0.0)) throw InvalidArgument("make_grid: cutoff and c must be > 0");
    std::vector<double> edges{0.0};
    const double s = std::min(0.5 * std::min(1.0, c), 0.25 * cutoff);
    for (int k = opt.inner_levels; k >= 0; --k) edges.push_back(s * std::pow(opt.inner_ratio, -k));
    double x = s;
    while (x < cutoff) {
        const double fine = std::min(opt.kernel_panels * c, opt.body_width);
        const double w = x < body ? fine : std::max(fine, opt.growth * x);
        double next = x + w;
        if (cutoff - next < 0.5 * w) next = cutoff;
        edges.push_back(next);
        x = next;
    }

    const auto gl = [&] {
        std::vector<std::pair<double, double>> r;
        const int m = opt.points_per_panel;
        // Boost tabulates fixed orders; golub-welsch would be overkill here.
        auto fill = [&](const auto& ab, const auto& wt) {
            for (size_t i = 0; i < ab.size(); ++i) {
                r.emplace_back(ab[i], wt[i]);
                if (ab[i] != 0.0) r.emplace_back(-ab[i], wt[i]);
            }
        };
        switch (m) {
            case 8: fill(boost::math::quadrature::gauss<double, 8>::abscissa(),
                         boost::math::quadrature::gauss<double, 8>::weights()); break;
            case 12: fill(boost::math::quadrature::gauss<double, 12>::abscissa(),
                          boost::math::quadrature::gauss<double, 12>::weights()); break;
            case 16: fill(boost::math::quadrature::gauss<double, 16>::abscissa(),
                          boost::math::quadrature::gauss<double, 16>::weights()); break;
            case 20: fill(boost::math::quadrature::gauss<double, 20>::abscissa(),
                          boost::math::quadrature::gauss<double, 20>::weights()); break;
            default: throw InvalidArgument("make_grid: points_per_panel must be 8, 12, 16 or 20");
        }
        std::sort(r.begin(), r.end());
        return r;
    }();

    std::vector<double> pn, pw;
    for (size_t e = 0; e + 1 < edges.size(); ++e) {
        const double a = edges[e], b = edges[e + 1];
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        for (const auto& [t, w] : gl) {
            pn.push_back(mid + half * t);
            pw.push_back(half * w);
        }
    }
    QuadratureGrid g;
    g.cutoff = cutoff;
    g.nodes.reserve(2 * pn.size());
    g.weights.reserve(2 * pn.size());
    for (size_t i = pn.size(); i-- > 0;) {
        g.nodes.push_back(-pn[i]);
        g.weights.push_back(pw[i]);
    }
    for (size_t i = 0; i < pn.size(); ++i) {
        g.nodes.push_back(pn[i]);
        g.weights.push_back(pw[i]);
    }
    return g;
}

// ============================================================================
// Solution types
// ============================================================================

enum class TbaKind { TES, NTES };

[[nodiscard]] inline std::string to_string(TbaKind k) { return k == TbaKind::TES ? "TES" : "NTES"; }

struct TbaSolution {
    TbaKind kind = TbaKind::TES;
    double c = 1.0;
    double T = std::numeric_limits<double>::quiet_NaN();  ///< TES only
    double target_density = 1.0;
    QuadratureGrid grid;
    std::vector<double> epsilon;      ///< on the full grid
    std::vector<double> filling;
    std::vector<double> density_fn;
    double multiplier = 0.0;          ///< h (TES) or h' (NTES)
    double tail_coefficient = 0.0;    ///< A in rho ~ A / l^4 + B / l^6 beyond the cutoff
    double tail_subleading = 0.0;     ///< B
    double tail_power = 0.0;          ///< 4 for NTES, 0 when no tail correction applies
    double tail_density = 0.0;        ///< both tails, integrated analytically
    double tail_energy = 0.0;
    double density = 0.0;             ///< int rho, tail included
    double fixed_point_residual = 0.0;
    bool origin_clamped = false;      ///< NTES driving term hit the clamp near 0
};

struct TbaOptions {
    GridOptions grid;
    double cutoff = 0.0;              ///< 0: automatic, 20 max(1, c, sqrt T, sqrt n) (NTES: 100 max(...))
    int max_cutoff_doublings = 3;
    double mixing = 0.5;
    int fixed_point_iterations = 500;
    double fixed_point_tol = 1e-10;
    int newton_iterations = 60;
    double density_rel_tol = 1e-10;
    double tail_fraction = 0.2;       ///< outer share of half-grid nodes used for the tail fit
    std::optional<double> multiplier_guess;  ///< start of the multiplier bracket search
};

inline constexpr double kEpsilonClamp = 700.0;

[[nodiscard]] inline double filling_of(double eps) {
    return 1.0 / (1.0 + std::exp(std::clamp(eps, -kEpsilonClamp, kEpsilonClamp)));
}

namespace detail {

/// ln(1 + e^-x) without overflow.
inline double log1p_exp_neg(double x) {
    return x > 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

/// Half-grid discretization shared by all solves at fixed (kind, c, T, grid).
class TbaSystem {
public:
    TbaSystem(TbaKind kind, double c, double T, QuadratureGrid grid, const TbaOptions& opt)
        : kind_(kind), c_(c), T_(T), grid_(std::move(grid)), opt_(opt) {
        const int m = grid_.half();
        lam_.resize(m);
        w_.resize(m);
        drive_.resize(m);
        for (int i = 0; i < m; ++i) {
            lam_(i) = grid_.pos_node(i);
            w_(i) = grid_.pos_weight(i);
            if (kind_ == TbaKind::TES) {
                drive_(i) = lam_(i) * lam_(i) / T_;
            } else {
                const double x2 = (lam_(i) / c_) * (lam_(i) / c_);
                drive_(i) = std::log(x2) + std::log(x2 + 0.25);
            }
        }
        kw_.resize(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                kw_(i, j) = (kernel(lam_(i) - lam_(j), c_) + kernel(lam_(i) + lam_(j), c_)) * w_(j) / kTwoPi;
    }

    [[nodiscard]] int half() const noexcept { return static_cast<int>(lam_.size()); }
    [[nodiscard]] const QuadratureGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] const Eigen::VectorXd& lambda() const noexcept { return lam_; }
    [[nodiscard]] const Eigen::VectorXd& weights() const noexcept { return w_; }

    /// eps shift per unit multiplier change (d eps / d multiplier = -shift).
    [[nodiscard]] double multiplier_scale() const noexcept { return kind_ == TbaKind::TES ? 1.0 / T_ : 1.0; }

    /// max_i |eps_i - F(eps)_i| / max(1, |eps_i|)
    double map_residual(const Eigen::VectorXd& eps, double mult, Eigen::VectorXd& g) const {
        Eigen::VectorXd lf(half());
        for (int i = 0; i < half(); ++i) lf(i) = log1p_exp_neg(eps(i));
        g = eps - (drive_.array() - mult * multiplier_scale()).matrix() + kw_ * lf;
        double r = 0.0;
        for (int i = 0; i < half(); ++i) r = std::max(r, std::abs(g(i)) / std::max(1.0, std::abs(eps(i))));
        return r;
    }

    /// Pseudo-energy for a given multiplier; returns the converged residual.
    double solve_epsilon(double mult, Eigen::VectorXd& eps) const {
        const int m = half();
        if (eps.size() != m) eps = drive_.array() - mult * multiplier_scale();
        Eigen::VectorXd g;
        double res = map_residual(eps, mult, g);
        std::vector<double> history;
        for (int it = 0; it < opt_.fixed_point_iterations && res > opt_.fixed_point_tol; ++it) {
            eps -= (1.0 - opt_.mixing) * g;
            res = map_residual(eps, mult, g);
            history.push_back(res);
            // Hand over early when the observed contraction cannot finish in budget.
            const size_t k = history.size();
            if (k >= 20) {
                const double rate = std::pow(history[k - 1] / history[k - 11], 0.1);
                if (!(rate < 1.0) ||
                    std::log(opt_.fixed_point_tol / res) / std::log(rate) > opt_.fixed_point_iterations - it) {
                    break;
                }
            }
        }
        if (res <= opt_.fixed_point_tol) return res;

        // Newton with a frozen Jacobian, refactored only when progress stalls.
        Eigen::MatrixXd jac(m, m);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu;
        bool fresh = false;
        auto refactor = [&] {
            for (int j = 0; j < m; ++j) {
                const double th = filling_of(eps(j));
                jac.col(j) = -kw_.col(j) * th;
                jac(j, j) += 1.0;
            }
            lu.compute(jac);
            fresh = true;
        };
        refactor();
        Eigen::VectorXd trial, gt;
        for (int it = 0; it < opt_.newton_iterations && res > opt_.fixed_point_tol; ++it) {
            const Eigen::VectorXd step = lu.solve(-g);
            double t = 1.0;
            bool moved = false;
            const double before = res;
            for (int halving = 0; halving < (fresh ? 30 : 1); ++halving, t *= 0.5) {
                trial = eps + t * step;
                const double r = map_residual(trial, mult, gt);
                if (r < res) {
                    eps.swap(trial);
                    g.swap(gt);
                    res = r;
                    moved = true;
                    break;
                }
            }
            if (!moved && fresh) break;
            fresh = false;
            if (!moved || res > 0.25 * before) refactor();
        }
        if (res > opt_.fixed_point_tol)
            throw ConvergenceError(fmt::format("TBA: pseudo-energy did not converge (residual {:.3e})", res), res);
        return res;
    }

    /**
     * rho from the linear equation (I - diag(theta) Kw) rho = theta / 2pi.
     * The direct solve is accurate only in absolute terms; one sweep of the
     * Nystrom map afterwards restores relative accuracy in the far tail.
     */
    [[nodiscard]] Eigen::VectorXd solve_density(const Eigen::VectorXd& eps) const {
        const int m = half();
        Eigen::VectorXd th(m);
        for (int i = 0; i < m; ++i) th(i) = filling_of(eps(i));
        Eigen::MatrixXd a = -(th.asDiagonal() * kw_);
        a.diagonal().array() += 1.0;
        const Eigen::VectorXd rho = a.partialPivLu().solve(th / kTwoPi);
        return (th.array() * (1.0 / kTwoPi + (kw_ * rho).array())).matrix();
    }

    [[nodiscard]] double bulk_density(const Eigen::VectorXd& rho) const { return 2.0 * w_.dot(rho); }
    [[nodiscard]] double bulk_energy(const Eigen::VectorXd& rho) const {
        return 2.0 * (w_.array() * lam_.array().square() * rho.array()).sum();
    }

private:
    TbaKind kind_;
    double c_, T_;
    QuadratureGrid grid_;
    TbaOptions opt_;
    Eigen::VectorXd lam_, w_, drive_;
    Eigen::MatrixXd kw_;
};

struct PowerTail {
    double coefficient = 0.0;  ///< A in rho ~ A / l^4 + B / l^6
    double subleading = 0.0;   ///< B
    double power = 0.0;        ///< 4 when a tail is fitted
};

/// Least-squares fit of rho = A / l^4 + B / l^6 over the outer share of the half grid.
inline PowerTail fit_power_tail(const Eigen::VectorXd& lam, const Eigen::VectorXd& rho, double fraction) {
    const int m = static_cast<int>(lam.size());
    const int count = std::min(m, std::max(8, static_cast<int>(fraction * m)));
    const int first = m - count;
    // Columns scaled by the cutoff so the normal equations stay well conditioned.
    const double cut = lam(m - 1);
    Eigen::MatrixXd a(count, 2);
    Eigen::VectorXd b(count);
    for (int i = 0; i < count; ++i) {
        const double u = cut / lam(first + i);
        const double s = std::pow(u, 4);
        a(i, 0) = 1.0;
        a(i, 1) = u * u;
        b(i) = rho(first + i) / s;  // relative weighting: rho / (cut/l)^4
    }
    const Eigen::Vector2d x = a.colPivHouseholderQr().solve(b);
    const double c4 = std::pow(cut, 4);
    return {x(0) * c4, x(1) * c4 * cut * cut, 4.0};
}

struct Evaluation {
    double mult = 0.0;
    Eigen::VectorXd eps, rho;
    double residual = 0.0;
    PowerTail tail;
    double tail_density = 0.0, tail_energy = 0.0;
    double density = 0.0;
};

inline Evaluation evaluate(const TbaSystem& sys, TbaKind kind, double mult, Eigen::VectorXd eps,
                           const TbaOptions& opt) {
    Evaluation ev;
    ev.mult = mult;
    ev.residual = sys.solve_epsilon(mult, eps);
    ev.rho = sys.solve_density(eps);
    ev.eps = std::move(eps);
    if (kind == TbaKind::NTES) {
        ev.tail = fit_power_tail(sys.lambda(), ev.rho, opt.tail_fraction);
        const double cut = sys.grid().cutoff, a = ev.tail.coefficient, b = ev.tail.subleading;
        ev.tail_density = 2.0 * (a / (3.0 * std::pow(cut, 3)) + b / (5.0 * std::pow(cut, 5)));
        ev.tail_energy = 2.0 * (a / cut + b / (3.0 * std::pow(cut, 3)));
    }
    ev.density = sys.bulk_density(ev.rho) + ev.tail_density;
    return ev;
}

/// Tune the multiplier so that the density equals @p n.
inline Evaluation tune_multiplier(const TbaSystem& sys, TbaKind kind, double n, double guess,
                                  double step, const TbaOptions& opt) {
    Eigen::VectorXd warm;
    double warm_mult = guess;
    auto eval = [&](double mult) {
        Eigen::VectorXd start;
        if (warm.size() > 0) start = warm.array() - (mult - warm_mult) * sys.multiplier_scale();
        Evaluation ev = evaluate(sys, kind, mult, std::move(start), opt);
        warm = ev.eps;
        warm_mult = mult;
        return ev;
    };

    Evaluation lo = eval(guess);
    Evaluation hi = lo;
    int expansions = 0;
    if (lo.density > n) {
        hi = lo;
        for (double d = step; lo.density > n; d *= 2) {
            if (++expansions > 80) throw BracketError("TBA: multiplier bracket (lower side) not found");
            lo = eval(hi.mult - d);
            if (lo.density > n) hi = lo;
        }
    } else {
        for (double d = step; hi.density < n; d *= 2) {
            if (++expansions > 80) throw BracketError("TBA: multiplier bracket (upper side) not found");
            hi = eval(lo.mult + d);
            if (hi.density < n) lo = hi;
        }
    }
    if (!(lo.density <= n && hi.density >= n) || hi.mult <= lo.mult)
        throw BracketError("TBA: density is not monotone in the multiplier");

    Evaluation best = std::abs(lo.density - n) < std::abs(hi.density - n) ? lo : hi;
    auto f = [&](double mult) {
        Evaluation ev = eval(mult);
        const double r = ev.density - n;
        if (std::abs(r) < std::abs(best.density - n)) best = ev;
        return r;
    };
    auto tol = [&](double a, double b) {
        return std::abs(best.density - n) <= opt.density_rel_tol * n ||
               std::abs(b - a) <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(a));
    };
    std::uintmax_t iters = 100;
    (void)boost::math::tools::toms748_solve(f, lo.mult, hi.mult, lo.density - n, hi.density - n, tol, iters);
    return best;
}

inline TbaSolution assemble(const TbaSystem& sys, TbaKind kind, double c, double T, double n,
                            const Evaluation& ev) {
    TbaSolution s;
    s.kind = kind;
    s.c = c;
    s.T = T;
    s.target_density = n;
    s.grid = sys.grid();
    const int m = sys.half();
    s.epsilon.resize(static_cast<size_t>(2 * m));
    s.filling.resize(static_cast<size_t>(2 * m));
    s.density_fn.resize(static_cast<size_t>(2 * m));
    for (int i = 0; i < m; ++i) {
        for (size_t idx : {static_cast<size_t>(m + i), static_cast<size_t>(m - 1 - i)}) {
            s.epsilon[idx] = ev.eps(i);
            s.filling[idx] = filling_of(ev.eps(i));
            s.density_fn[idx] = ev.rho(i);
        }
        if (kind == TbaKind::NTES && ev.eps(i) < -kEpsilonClamp) s.origin_clamped = true;
    }
    s.multiplier = ev.mult;
    s.tail_coefficient = ev.tail.coefficient;
    s.tail_subleading = ev.tail.subleading;
    s.tail_power = ev.tail.power;
    s.tail_density = ev.tail_density;
    s.tail_energy = ev.tail_energy;
    s.density = ev.density;
    s.fixed_point_residual = ev.residual;
    return s;
}

/// Cutoff is adequate when the outermost filling is negligible (TES) or the
/// power-law tail has set in (NTES).
inline bool tail_ok(TbaKind kind, const Evaluation& ev, const TbaSystem& sys) {
    const int m = sys.half();
    if (kind == TbaKind::TES) return ev.eps(m - 1) > 40.0;
    // The 1/l^6 correction must be subleading at the cutoff.
    return ev.tail.coefficient > 0.0 &&
           std::abs(ev.tail.subleading) <= 0.1 * ev.tail.coefficient * sys.grid().cutoff * sys.grid().cutoff &&
           ev.tail_density <= 1e-3 * ev.density;
}

inline TbaSolution solve_tba(TbaKind kind, double c, double T, double n, const TbaOptions& opt) {
    if (!(c > 0.0)) throw InvalidArgument("TBA: c must be > 0");
    if (!(n > 0.0)) throw InvalidArgument("TBA: density must be > 0");
    if (kind == TbaKind::TES && !(T > 0.0)) throw InvalidArgument("TBA: T must be > 0");
    // The NTES tail reaches its 1/l^4 form only for l >> max(1, c).
    const double factor = kind == TbaKind::NTES ? 100.0 : 20.0;
    double cutoff = opt.cutoff > 0.0
                        ? opt.cutoff
                        : factor * std::max({1.0, c, kind == TbaKind::TES ? std::sqrt(T) : 1.0, std::sqrt(n)});
    // Initial multipliers: zero-temperature Fermi level / unit-filling level.
    double guess = 0.0, step = 1.0;
    if (kind == TbaKind::TES) {
        guess = std::min(kPi * kPi * n * n, 2.0 * c * n);
        step = std::max(1.0, T);
    }
    if (opt.multiplier_guess) {
        guess = *opt.multiplier_guess;
        step *= 0.1;
    }
    const double body = 3.0 * std::max(1.0, kind == TbaKind::TES ? std::sqrt(T) : 1.0) * std::max(1.0, n);
    for (int d = 0;; ++d) {
        TbaSystem sys(kind, c, T, make_grid(cutoff, c, body, opt.grid), opt);
        Evaluation ev = tune_multiplier(sys, kind, n, guess, step, opt);
        if (tail_ok(kind, ev, sys) || d >= opt.max_cutoff_doublings)
            return assemble(sys, kind, c, T, n, ev);
        guess = ev.mult;
        cutoff *= 2.0;
    }
}

}  // namespace detail

// ============================================================================
// Public operations
// ============================================================================

/// Thermal state at temperature T and density n.
[[nodiscard]] inline TbaSolution solve_tes(double c, double T, double n, const TbaOptions& opt = {}) {
    return detail::solve_tba(TbaKind::TES, c, T, n, opt);
}

/// Post-quench stationary state from the non-interacting BEC, density n.
[[nodiscard]] inline TbaSolution solve_ntes(double c, double n, const TbaOptions& opt = {}) {
    return detail::solve_tba(TbaKind::NTES, c, std::numeric_limits<double>::quiet_NaN(), n, opt);
}

/// int l^2 rho dl including the analytic tail beyond the cutoff.
[[nodiscard]] inline double energy_density(const TbaSolution& s) {
    double e = s.tail_energy;
    for (int i = 0; i < s.grid.size(); ++i) {
        const auto k = static_cast<size_t>(i);
        e += s.grid.weights[k] * s.grid.nodes[k] * s.grid.nodes[k] * s.density_fn[k];
    }
    return e;
}

/// int rho dl including the analytic tail.
[[nodiscard]] inline double particle_density(const TbaSolution& s) {
    double n = s.tail_density;
    for (int i = 0; i < s.grid.size(); ++i)
        n += s.grid.weights[static_cast<size_t>(i)] * s.density_fn[static_cast<size_t>(i)];
    return n;
}

/// Hole density rho_h = rho (1 - theta) / theta at node i.
[[nodiscard]] inline double hole_density(const TbaSolution& s, int i) {
    const auto k = static_cast<size_t>(i);
    const double th = s.filling[k];
    return th > 0.0 ? s.density_fn[k] * (1.0 - th) / th : 0.0;
}

struct MatchOptions {
    double rel_tol = 1e-4;   ///< on the energy density
    double t_start = 1.0;
    int max_expansions = 40;
};

/**
 * Temperature whose thermal state at (c, n) carries energy density e_target.
 * Bracketed on ln T (energy is increasing in T), then TOMS 748.
 */
[[nodiscard]] inline double match_temperature(double c, double n, double e_target,
                                              const TbaOptions& opt = {}, const MatchOptions& mopt = {}) {
    if (!(e_target > 0.0)) throw InvalidArgument("match_temperature: target energy must be > 0");
    // Neighbouring temperatures seed each other's chemical potential.
    std::vector<std::pair<double, double>> seen;  // (ln T, h)
    auto f = [&](double log_t) {
        TbaOptions o = opt;
        if (!seen.empty()) {
            const auto near = std::min_element(seen.begin(), seen.end(), [&](const auto& a, const auto& b) {
                return std::abs(a.first - log_t) < std::abs(b.first - log_t);
            });
            o.multiplier_guess = near->second;
        }
        const TbaSolution s = solve_tes(c, std::exp(log_t), n, o);
        seen.emplace_back(log_t, s.multiplier);
        return energy_density(s) / e_target - 1.0;
    };
    double a = std::log(mopt.t_start), b = a;
    double fa = f(a), fb = fa;
    int k = 0;
    if (fa > 0) {
        while (fa > 0) {
            if (++k > mopt.max_expansions) throw BracketError("match_temperature: no lower temperature bracket");
            b = a; fb = fa;
            a -= 1.0;
            fa = f(a);
        }
    } else {
        while (fb < 0) {
            if (++k > mopt.max_expansions) throw BracketError("match_temperature: no upper temperature bracket");
            a = b; fa = fb;
            b += 1.0;
            fb = f(b);
        }
    }
    double best_x = std::abs(fa) < std::abs(fb) ? a : b;
    double best_f = std::min(std::abs(fa), std::abs(fb));
    auto g = [&](double x) {
        const double v = f(x);
        if (std::abs(v) < best_f) {
            best_f = std::abs(v);
            best_x = x;
        }
        return v;
    };
    auto tol = [&](double, double) { return best_f <= 0.25 * mopt.rel_tol; };
    std::uintmax_t iters = 60;
    (void)boost::math::tools::toms748_solve(g, a, b, fa, fb, tol, iters);
    if (best_f > mopt.rel_tol)
        throw ConvergenceError("match_temperature: energy mismatch above tolerance", best_f);
    return std::exp(best_x);
}

// ============================================================================
// Tail analysis
// ============================================================================

struct TailWindow {
    double lo = 0.0;
    double hi = 0.0;
};

struct TailFit {
    double exponent = 0.0;       ///< p in rho ~ A / l^p
    double coefficient = 0.0;    ///< A
    double rms_power = 0.0;      ///< rms residual of the log-log fit
    double rms_exponential = 0.0;///< rms residual of the ln rho vs l^2 fit
    int points = 0;
    bool exponential = false;    ///< power law fits worse than a Gaussian-type decay
};

/**
 * Power-law fit of the root density's tail over the outer decade
 * [cutoff/10, cutoff] or an explicit window.  Nodes where the filling
 * hits the clamp are excluded.
 */
[[nodiscard]] inline TailFit tail_exponent(const TbaSolution& s, std::optional<TailWindow> window = std::nullopt) {
    const TailWindow w = window.value_or(TailWindow{0.1 * s.grid.cutoff, s.grid.cutoff});
    if (!window && s.grid.cutoff < 20.0 * std::max(1.0, s.c) * (1.0 - 1e-12))
        throw InvalidArgument("tail_exponent: grid cutoff below 20 max(1, c)");
    std::vector<double> x, y, x2;
    for (int i = s.grid.half(); i < s.grid.size(); ++i) {
        const auto k = static_cast<size_t>(i);
        const double l = s.grid.nodes[k];
        if (l < w.lo || l > w.hi) continue;
        if (!(s.density_fn[k] > 0.0) || s.epsilon[k] >= kEpsilonClamp - 10.0) continue;
        x.push_back(std::log(l));
        x2.push_back(l * l);
        y.push_back(std::log(s.density_fn[k]));
    }
    if (x.size() < 8) throw InvalidArgument("tail_exponent: insufficient tail nodes");
    auto fit = [&](const std::vector<double>& u) {
        Eigen::MatrixXd a(static_cast<Eigen::Index>(u.size()), 2);
        Eigen::VectorXd b(static_cast<Eigen::Index>(u.size()));
        for (size_t i = 0; i < u.size(); ++i) {
            a(static_cast<Eigen::Index>(i), 0) = 1.0;
            a(static_cast<Eigen::Index>(i), 1) = u[i];
            b(static_cast<Eigen::Index>(i)) = y[i];
        }
        const Eigen::Vector2d coef = a.colPivHouseholderQr().solve(b);
        const double rms = std::sqrt((a * coef - b).squaredNorm() / static_cast<double>(u.size()));
        return std::pair{coef, rms};
    };
    const auto [pc, prms] = fit(x);
    const auto [ec, erms] = fit(x2);
    TailFit out;
    out.exponent = -pc(1);
    out.coefficient = std::exp(pc(0));
    out.rms_power = prms;
    out.rms_exponential = erms;
    out.points = static_cast<int>(x.size());
    out.exponential = erms < prms;
    return out;
}

// ============================================================================
// Export
// ============================================================================

[[nodiscard]] inline nlohmann::json tba_header(const TbaSolution& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind);
    j["c"] = s.c;
    j["T"] = s.kind == TbaKind::TES ? nlohmann::json(s.T) : nlohmann::json(nullptr);
    j["multiplier"] = s.multiplier;
    j["density"] = s.density;
    j["energy_density"] = energy_density(s);
    std::optional<TailFit> tf;
    try {
        tf = tail_exponent(s);
    } catch (const InvalidArgument&) {
    }
    j["tail_exponent"] = tf ? nlohmann::json(tf->exponent) : nlohmann::json(nullptr);
    j["tail_exponential"] = tf ? nlohmann::json(tf->exponential) : nlohmann::json(nullptr);
    j["Lambda"] = s.grid.cutoff;
    j["M"] = s.grid.size();
    j["fixed_point_residual"] = s.fixed_point_residual;
    return j;
}

inline void write_tba_csv(const TbaSolution& s, const std::string& path, const std::string& config_hash = {}) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path);
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
    os << "lambda,epsilon,filling,rho\n";
    for (size_t i = 0; i < s.grid.nodes.size(); ++i)
        os << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g}\n", s.grid.nodes[i], s.epsilon[i], s.filling[i],
                          s.density_fn[i]);
}

}  // namespace llspec

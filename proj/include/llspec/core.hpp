// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file core.hpp
 * @brief Model parameters, quantum-number configurations and error types.
 *
 * Units: hbar = 2m = 1, so a single particle of rapidity lambda carries
 * momentum lambda and energy lambda^2.  Quantum numbers are stored doubled
 * (2I) so that integer and half-odd-integer sectors share one exact integer
 * representation.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace llspec {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// ============================================================================
// Errors
// ============================================================================

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative solver failed to reach its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Precondition violated by the caller (bad parity, size mismatch, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Root bracketing for a Lagrange multiplier or temperature failed.
class BracketError : public Error {
public:
    using Error::Error;
};

// ============================================================================
// Model parameters
// ============================================================================

struct ModelParams {
    double c = 1.0;  ///< interaction strength
    double L = 1.0;  ///< system length
    int N = 1;       ///< particle count

    void validate() const {
        if (!(c > 0.0)) throw InvalidArgument("ModelParams: c must be > 0");
        if (!(L > 0.0)) throw InvalidArgument("ModelParams: L must be > 0");
        if (N < 1) throw InvalidArgument("ModelParams: N must be >= 1");
    }
    [[nodiscard]] double density() const noexcept { return N / L; }
    [[nodiscard]] double fermi_momentum() const noexcept { return kPi * N / L; }
    [[nodiscard]] double fermi_energy() const noexcept {
        const double kf = fermi_momentum();
        return kf * kf;
    }
    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Lieb-Liniger scattering kernel K(x) = 2c / (c^2 + x^2).
[[nodiscard]] inline double kernel(double x, double c) noexcept {
    return 2.0 * c / (c * c + x * x);
}

// ============================================================================
// Quantum numbers
// ============================================================================

/// True when 2I has the parity required for an n-particle state: integers for
/// odd n, half-odd integers for even n.
[[nodiscard]] constexpr bool parity_ok(int twice_qn, int n) noexcept {
    const bool odd_twice = (twice_qn % 2) != 0;
    return (n % 2 == 0) ? odd_twice : !odd_twice;
}

/**
 * Strictly increasing set of Bethe quantum numbers, stored as 2I.
 *
 * An empty configuration is the vacuum (N = 0), which appears as the
 * intermediate sector of a one-particle state.
 */
class QNConfig {
public:
    QNConfig() = default;

    /// Build from doubled quantum numbers; validates ordering and parity.
    static QNConfig from_twice(std::vector<int> twice) {
        QNConfig q;
        q.twice_ = std::move(twice);
        q.validate();
        return q;
    }

    /// Build from quantum-number values; each must be an integer or half-odd integer.
    static QNConfig from_values(std::span<const double> values) {
        std::vector<int> twice;
        twice.reserve(values.size());
        for (double v : values) {
            const double t = 2.0 * v;
            const double r = std::round(t);
            if (std::abs(t - r) > 1e-9)
                throw InvalidArgument("QNConfig: value is not a (half-)integer");
            twice.push_back(static_cast<int>(r));
        }
        return from_twice(std::move(twice));
    }

    [[nodiscard]] int size() const noexcept { return static_cast<int>(twice_.size()); }
    [[nodiscard]] bool empty() const noexcept { return twice_.empty(); }
    [[nodiscard]] int twice(int j) const { return twice_.at(static_cast<size_t>(j)); }
    [[nodiscard]] double value(int j) const { return 0.5 * twice(j); }
    [[nodiscard]] const std::vector<int>& twice_values() const& noexcept { return twice_; }
    [[nodiscard]] std::vector<int> twice_values() && noexcept { return std::move(twice_); }

    [[nodiscard]] std::vector<double> values() const {
        std::vector<double> v(twice_.size());
        std::transform(twice_.begin(), twice_.end(), v.begin(), [](int t) { return 0.5 * t; });
        return v;
    }

    /// 2 * sum of quantum numbers (exact).
    [[nodiscard]] long twice_sum() const noexcept {
        return std::accumulate(twice_.begin(), twice_.end(), 0L);
    }

    /// Mirror image {-I_N, ..., -I_1}.
    [[nodiscard]] QNConfig mirrored() const {
        std::vector<int> m(twice_.rbegin(), twice_.rend());
        for (int& t : m) t = -t;
        return from_twice(std::move(m));
    }

    void validate() const {
        const int n = size();
        for (int j = 0; j < n; ++j) {
            if (!parity_ok(twice_[static_cast<size_t>(j)], n))
                throw InvalidArgument("QNConfig: parity does not match particle count " +
                                      std::to_string(n));
            if (j > 0 && twice_[static_cast<size_t>(j)] <= twice_[static_cast<size_t>(j - 1)])
                throw InvalidArgument("QNConfig: quantum numbers must be strictly increasing");
        }
    }

    friend bool operator==(const QNConfig&, const QNConfig&) = default;
    friend auto operator<=>(const QNConfig&, const QNConfig&) = default;

private:
    std::vector<int> twice_;
};

/// Ground state: I_j = j - (N+1)/2.
[[nodiscard]] inline QNConfig ground_state_qns(int n) {
    if (n < 1) throw InvalidArgument("ground_state_qns: N must be >= 1");
    std::vector<int> twice(static_cast<size_t>(n));
    for (int j = 1; j <= n; ++j) twice[static_cast<size_t>(j - 1)] = 2 * j - (n + 1);
    return QNConfig::from_twice(std::move(twice));
}

struct QNConfigHash {
    size_t operator()(const QNConfig& q) const noexcept {
        uint64_t h = 1469598103934665603ULL;
        for (int t : q.twice_values()) {
            h ^= static_cast<uint64_t>(static_cast<uint32_t>(t));
            h *= 1099511628211ULL;
        }
        return static_cast<size_t>(h);
    }
};

}  // namespace llspec

// Copyright 2026 The llspec Authors
// SPDX-License-Identifier: Apache-2.0

/**
 * @file scan.hpp
 * @brief Tag-classified summation over the (N-1)-particle sector.
 *
 * The field operator removes one particle from the base state |s>.  For each
 * removed index p the remaining quantum numbers, shifted by half a slot to
 * the opposite parity, form a reference configuration.  Any (N-1)-particle
 * configuration q differs from a reference by a set of holes H (slots left
 * empty) and particles P (slots newly filled).  Pairing both sets in sorted
 * order gives N_p displacements d_i = P_i - H_i; the rightward ones sum to
 * P_m, the leftward ones carry P_l in N_l moves.  That four-number tag is a
 * function of (reference, q), so classes of one reference are disjoint.
 * Across references q is assigned to the first (tag, p) in schedule order.
 *
 * Momenta are kept as exact integers in units of 2 pi / L.
 */

#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "llspec/bethe.hpp"
#include "llspec/form_factors.hpp"

namespace llspec {

// ============================================================================
// Tags and classes
// ============================================================================

struct ExcitationTag {
    int P_m = 0;  ///< total rightward momentum
    int N_p = 0;  ///< number of moves
    int P_l = 0;  ///< total leftward momentum
    int N_l = 0;  ///< number of leftward moves

    friend bool operator==(const ExcitationTag&, const ExcitationTag&) = default;

    /// Schedule order: N_p, then P_m, then P_l, then N_l.
    [[nodiscard]] auto schedule_key() const { return std::tuple(N_p, P_m, P_l, N_l); }

    [[nodiscard]] bool valid() const noexcept {
        if (P_m < 0 || N_p < 0 || P_l < 0 || N_l < 0 || N_l > N_p) return false;
        const int right = N_p - N_l;
        if ((right == 0) != (P_m == 0) || P_m < right) return false;
        if ((N_l == 0) != (P_l == 0) || P_l < N_l) return false;
        return true;
    }
};

inline std::ostream& operator<<(std::ostream& os, const ExcitationTag& t) {
    return os << '{' << t.P_m << ',' << t.N_p << ',' << t.P_l << ',' << t.N_l << '}';
}

/// Which way the surviving quantum numbers move when the parity flips.
enum class ParityShift { minus_half, plus_half };

[[nodiscard]] inline std::string to_string(ParityShift s) {
    return s == ParityShift::minus_half ? "minus_half" : "plus_half";
}

[[nodiscard]] inline ParityShift parity_shift_from_string(const std::string& s) {
    if (s == "minus_half") return ParityShift::minus_half;
    if (s == "plus_half") return ParityShift::plus_half;
    throw InvalidArgument("unknown parity shift '" + s + "' (expected minus_half or plus_half)");
}

/// Drop base quantum number @p removal_index and shift the rest by -1/2 (or +1/2).
[[nodiscard]] inline QNConfig reference_config(const QNConfig& base, int removal_index,
                                               ParityShift shift = ParityShift::minus_half) {
    if (removal_index < 0 || removal_index >= base.size())
        throw InvalidArgument(fmt::format("reference_config: removal index {} outside [0, {})", removal_index,
                                          base.size()));
    const int delta = shift == ParityShift::minus_half ? -1 : 1;
    std::vector<int> out;
    out.reserve(static_cast<size_t>(base.size() - 1));
    for (int j = 0; j < base.size(); ++j)
        if (j != removal_index) out.push_back(base.twice(j) + delta);
    return QNConfig::from_twice(std::move(out));
}

/// Holes and particles of q relative to ref (doubled values, ascending).
struct Displacement {
    std::vector<int> holes;
    std::vector<int> particles;
};

[[nodiscard]] inline Displacement displacement(const QNConfig& ref, const QNConfig& q) {
    Displacement d;
    const auto& a = ref.twice_values();
    const auto& b = q.twice_values();
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(d.holes));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(d.particles));
    return d;
}

/// Tag of q relative to ref; both must hold the same number of particles.
[[nodiscard]] inline ExcitationTag tag_between(const QNConfig& ref, const QNConfig& q) {
    if (ref.size() != q.size()) throw InvalidArgument("tag_between: particle counts differ");
    const auto d = displacement(ref, q);
    ExcitationTag t;
    t.N_p = static_cast<int>(d.holes.size());
    for (size_t i = 0; i < d.holes.size(); ++i) {
        const int step = (d.particles[i] - d.holes[i]) / 2;
        if (step > 0) {
            t.P_m += step;
        } else {
            t.P_l -= step;
            ++t.N_l;
        }
    }
    return t;
}

namespace detail {

struct ClassBuilder {
    const std::vector<int>& ref;
    std::vector<int> holes, particles;  // indices into ref / doubled values
    std::vector<QNConfig>& out;

    void emit() {
        std::vector<int> q;
        q.reserve(ref.size());
        size_t h = 0;
        for (size_t j = 0; j < ref.size(); ++j) {
            if (h < holes.size() && holes[h] == static_cast<int>(j)) {
                ++h;
                continue;
            }
            q.push_back(ref[j]);
        }
        const auto mid = q.insert(q.end(), particles.begin(), particles.end());
        std::inplace_merge(q.begin(), mid, q.end());
        out.push_back(QNConfig::from_twice(std::move(q)));
    }

    bool in_ref(int tw) const { return std::binary_search(ref.begin(), ref.end(), tw); }

    // right/left: moves still to place; pm/pl: momentum still to spend.
    void place(int first_hole, int right, int pm, int left, int pl) {
        if (right == 0 && left == 0) {
            if (pm == 0 && pl == 0) emit();
            return;
        }
        const int last_particle = particles.empty() ? std::numeric_limits<int>::min() : particles.back();
        for (int h = first_hole; h < static_cast<int>(ref.size()); ++h) {
            const int origin = ref[static_cast<size_t>(h)];
            holes.push_back(h);
            if (right > 0) {
                const int hi = right == 1 ? pm : pm - (right - 1);
                const int lo = right == 1 ? pm : 1;
                for (int d = lo; d <= hi; ++d) {
                    const int tw = origin + 2 * d;
                    if (tw <= last_particle || in_ref(tw)) continue;
                    particles.push_back(tw);
                    place(h + 1, right - 1, pm - d, left, pl);
                    particles.pop_back();
                }
            }
            if (left > 0) {
                const int hi = left == 1 ? pl : pl - (left - 1);
                const int lo = left == 1 ? pl : 1;
                for (int d = lo; d <= hi; ++d) {
                    const int tw = origin - 2 * d;
                    if (tw <= last_particle || in_ref(tw)) continue;
                    particles.push_back(tw);
                    place(h + 1, right, pm, left - 1, pl - d);
                    particles.pop_back();
                }
            }
            holes.pop_back();
        }
    }
};

}  // namespace detail

/// Every configuration whose tag relative to @p ref equals @p tag.
[[nodiscard]] inline std::vector<QNConfig> enumerate_class(const QNConfig& ref, const ExcitationTag& tag) {
    std::vector<QNConfig> out;
    if (!tag.valid() || tag.N_p > ref.size()) return out;
    detail::ClassBuilder b{ref.twice_values(), {}, {}, out};
    b.place(0, tag.N_p - tag.N_l, tag.P_m, tag.N_l, tag.P_l);
    std::sort(out.begin(), out.end());
    return out;
}

// ============================================================================
// Lines and reports
// ============================================================================

enum class TypeClass { A, B, other };

[[nodiscard]] inline std::string to_string(TypeClass t) {
    switch (t) {
        case TypeClass::A: return "A";
        case TypeClass::B: return "B";
        default: return "other";
    }
}

[[nodiscard]] inline TypeClass type_class_from_string(const std::string& s) {
    if (s == "A") return TypeClass::A;
    if (s == "B") return TypeClass::B;
    if (s == "other") return TypeClass::other;
    throw InvalidArgument("unknown type class '" + s + "'");
}

struct SpectralLine {
    long k = 0;           ///< momentum transfer in units of 2 pi / L
    double omega = 0.0;   ///< E_base - E_intermediate
    double weight = 0.0;  ///< normalized |<r|Psi(0)|s>|^2
    ExcitationTag tag;
    int removal = 0;      ///< removed base index of the owning reference
    TypeClass type = TypeClass::other;
};

enum class Truncation { saturation, momentum, energy };

[[nodiscard]] inline std::string to_string(Truncation t) {
    switch (t) {
        case Truncation::saturation: return "saturation";
        case Truncation::momentum: return "momentum-wise";
        default: return "energy-wise";
    }
}

struct ScanReport {
    ModelParams params;
    QNConfig base;
    double base_energy = 0.0;
    ParityShift shift = ParityShift::minus_half;
    std::vector<SpectralLine> lines;
    double saturation = 0.0;
    std::vector<double> saturation_trace;  ///< after each completed wave
    long classes_visited = 0;
    long states_evaluated = 0;
    long beyond_energy_cap = 0;
    std::vector<std::string> failures;     ///< configurations whose Bethe solve failed
    Truncation truncation = Truncation::energy;
};

/// sum(weights) / (N / L).
[[nodiscard]] inline double sum_rule_saturation(std::span<const SpectralLine> lines, int n, double L) {
    double acc = 0.0;
    for (const auto& l : lines) acc += l.weight;
    return acc * L / n;
}

// ============================================================================
// Scan
// ============================================================================

struct ScanThresholds {
    double saturation_target = 0.999;
    double class_weight_floor = 1e-10;  ///< in units of N/L
    int max_P_m = 0;                    ///< 0: 4N
    int max_P_l = 0;                    ///< 0: same as max_P_m
    int max_N_p = -1;                   ///< negative: N - 1
    double max_energy = 0.0;            ///< |omega| cap; 0: 16 eps_F
};

struct ScanProgress {
    ExcitationTag wave;  ///< N_l unused
    long classes = 0;
    long states = 0;
    double saturation = 0.0;
    double seconds = 0.0;
};

struct ScanOptions {
    ScanThresholds thresholds;
    ParityShift shift = ParityShift::minus_half;
    int workers = 1;
    std::filesystem::path checkpoint;  ///< empty: no checkpoint
    bool resume = false;
    std::string run_id;                ///< stored in the checkpoint and checked on resume
    bool check_disjoint = false;       ///< keep a visited set and fail on revisits
    BetheSolverOptions solver;
    std::function<void(const ScanProgress&)> progress;
};

namespace detail {

struct ClassJob {
    int removal = 0;
    ExcitationTag tag;
};

struct ClassResult {
    int removal = 0;
    ExcitationTag tag;
    std::vector<SpectralLine> lines;
    std::vector<std::string> failures;
    std::vector<QNConfig> members;  // only kept for the disjointness check
    long evaluated = 0;
    long beyond_cap = 0;
    double weight = 0.0;
    bool dead = false;  // nonempty and negligible: prune dominated tags
};

inline std::string qns_string(const QNConfig& q) {
    std::string s = "[";
    for (int j = 0; j < q.size(); ++j) s += fmt::format("{}{}", j ? " " : "", 0.5 * q.twice(j));
    return s + "]";
}

/// Piecewise-linear slot -> rapidity map through a solved state, free slope outside.
inline double interpolate_rapidity(const BetheState& s, int twice) {
    const auto& q = s.qns.twice_values();
    const auto& lam = s.rapidities;
    const double slope = kPi / s.params.L;  // per doubled unit
    if (q.empty()) return slope * twice;
    if (twice <= q.front()) return lam.front() + slope * (twice - q.front());
    if (twice >= q.back()) return lam.back() + slope * (twice - q.back());
    const auto it = std::lower_bound(q.begin(), q.end(), twice);
    const auto j = static_cast<size_t>(it - q.begin());
    if (*it == twice) return lam[j];
    const double t = double(twice - q[j - 1]) / double(q[j] - q[j - 1]);
    return lam[j - 1] + t * (lam[j] - lam[j - 1]);
}

class Scanner {
public:
    Scanner(const BetheState& base, const ScanOptions& opt) : base_(base), opt_(opt) {
        const int n = base.size();
        if (n < 1) throw InvalidArgument("scan: base state must hold at least one particle");
        if (!(base.residual <= opt.solver.accept_residual))
            throw InvalidArgument("scan: base state is not solved");
        auto& th = opt_.thresholds;
        if (!(th.saturation_target > 0.0) || !(th.class_weight_floor >= 0.0) ||
            th.max_P_m < 0 || th.max_P_l < 0 || !(th.max_energy >= 0.0))
            throw InvalidArgument("scan: thresholds must be positive");
        if (th.max_P_m == 0) th.max_P_m = 4 * n;
        if (th.max_P_l == 0) th.max_P_l = th.max_P_m;
        const double kf = kPi * n / base.params.L;
        if (th.max_energy == 0.0) th.max_energy = 16.0 * kf * kf;
        th.max_N_p = th.max_N_p < 0 ? n - 1 : std::min(th.max_N_p, n - 1);
        floor_ = th.class_weight_floor * n / base.params.L;
        delta_ = n >= 2 ? (base.qns.twice(1) - base.qns.twice(0)) / 2 : 0;

        const ModelParams rp{base.params.c, base.params.L, n - 1};
        for (int p = 0; p < n; ++p) {
            refs_.push_back(reference_config(base.qns, p, opt_.shift));
            if (n == 1) {
                ref_states_.push_back(vacuum_state(rp.c, rp.L));
                continue;
            }
            // Surviving base rapidities are a good start for the reference itself.
            std::vector<double> guess;
            for (int j = 0; j < n; ++j)
                if (j != p) guess.push_back(base.rapidities[static_cast<size_t>(j)]);
            ref_states_.push_back(solve_bethe(rp, refs_.back(), guess, opt_.solver));
        }
    }

    ScanReport run() {
        const auto t0 = std::chrono::steady_clock::now();
        ScanReport rep;
        rep.params = base_.params;
        rep.base = base_.qns;
        rep.base_energy = base_.energy;
        rep.shift = opt_.shift;
        open_checkpoint();

        const auto& th = opt_.thresholds;
        const int n = base_.size();
        double total = 0.0;
        bool done = false, capped = false;
        const int max_total = th.max_P_m + th.max_P_l;
        for (int total_p = 0; total_p <= max_total + 1 && !done; ++total_p) {
            for (int np = 0; np <= std::min(th.max_N_p, total_p) && !done; ++np) {
                for (int pm = 0; pm <= total_p && !done; ++pm) {
                    const int pl = total_p - pm;
                    std::vector<ClassJob> jobs;
                    for (int nl = 0; nl <= np; ++nl) {
                        const ExcitationTag tag{pm, np, pl, nl};
                        if (!tag.valid()) continue;
                        for (int p = 0; p < n; ++p) {
                            if (pruned(p, tag)) continue;
                            if (pm > th.max_P_m || pl > th.max_P_l || total_p > max_total) {
                                capped = true;  // family still alive at the momentum cap
                                continue;
                            }
                            jobs.push_back({p, tag});
                        }
                    }
                    if (jobs.empty()) continue;
                    const ExcitationTag wave{pm, np, pl, 0};
                    auto results = replay(wave);
                    if (!results) {
                        results = evaluate(jobs);
                        record(wave, *results);
                    }
                    for (auto& r : *results) {
                        ++rep.classes_visited;
                        rep.states_evaluated += r.evaluated;
                        rep.beyond_energy_cap += r.beyond_cap;
                        for (auto& f : r.failures) rep.failures.push_back(std::move(f));
                        for (auto& l : r.lines) {
                            total += l.weight;
                            rep.lines.push_back(l);
                        }
                        if (r.dead) dead_[family(r.removal, r.tag)].emplace_back(r.tag.P_m, r.tag.P_l);
                        if (opt_.check_disjoint)
                            for (auto& q : r.members)
                                if (!visited_.insert(q).second)
                                    throw Error("scan: configuration visited twice: " + qns_string(q));
                    }
                    rep.saturation = total * base_.params.L / n;
                    rep.saturation_trace.push_back(rep.saturation);
                    if (opt_.progress) {
                        const double secs =
                            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                        opt_.progress({wave, rep.classes_visited, rep.states_evaluated, rep.saturation, secs});
                    }
                    if (rep.saturation >= th.saturation_target) done = true;
                }
            }
        }
        rep.truncation = done ? Truncation::saturation : capped ? Truncation::momentum : Truncation::energy;
        return rep;
    }

private:
    using Family = std::tuple<int, int, int>;  // removal, N_p, N_l

    static Family family(int p, const ExcitationTag& t) { return {p, t.N_p, t.N_l}; }

    // A tag is skipped when a negligible class of its family sits at lower or equal momenta.
    bool pruned(int p, const ExcitationTag& t) const {
        const auto it = dead_.find(family(p, t));
        if (it == dead_.end()) return false;
        for (auto [pm, pl] : it->second)
            if (pm <= t.P_m && pl <= t.P_l) return true;
        return false;
    }

    bool owns(int p, const ExcitationTag& tag, const QNConfig& q) const {
        const auto key = std::tuple(tag.schedule_key(), p);
        for (int o = 0; o < static_cast<int>(refs_.size()); ++o) {
            if (o == p) continue;
            const auto other = tag_between(refs_[static_cast<size_t>(o)], q);
            if (std::tuple(other.schedule_key(), o) < key) return false;
        }
        return true;
    }

    // Relative to the base: a particle is "relaxed" when it sits half a slot
    // from an occupied base slot, i.e. it only followed the parity flip.
    TypeClass classify(const QNConfig& q, long k) const {
        if (q.empty()) return TypeClass::other;
        const auto& s = base_.qns.twice_values();
        auto relaxed = [&](int t) {
            return std::binary_search(s.begin(), s.end(), t - 1) || std::binary_search(s.begin(), s.end(), t + 1);
        };
        if (relaxed(q.twice(0))) return TypeClass::other;  // leftmost particle not excited
        int others = 0;
        for (int j = 1; j < q.size(); ++j) others += !relaxed(q.twice(j));
        if (others == 0 && std::abs(k) <= delta_) return TypeClass::B;
        if (others > 0 && q.twice(0) > s.front()) return TypeClass::A;
        return TypeClass::other;
    }

    ClassResult run_class(const ClassJob& job) const {
        ClassResult r;
        r.removal = job.removal;
        r.tag = job.tag;
        const auto p = static_cast<size_t>(job.removal);
        const QNConfig& ref = refs_[p];
        const BetheState& ref_state = ref_states_[p];
        const ModelParams rp{base_.params.c, base_.params.L, base_.size() - 1};
        long members = 0;
        for (auto& q : enumerate_class(ref, job.tag)) {
            if (!owns(job.removal, job.tag, q)) continue;
            ++members;
            const long k = (base_.qns.twice_sum() - q.twice_sum()) / 2;
            BetheState st;
            if (q.empty()) {
                st = ref_state;
            } else {
                std::vector<double> guess(static_cast<size_t>(q.size()));
                for (int j = 0; j < q.size(); ++j)
                    guess[static_cast<size_t>(j)] = interpolate_rapidity(ref_state, q.twice(j));
                try {
                    st = solve_bethe(rp, q, guess, opt_.solver);
                } catch (const ConvergenceError&) {
                    r.failures.push_back(qns_string(q));
                    continue;
                }
            }
            ++r.evaluated;
            const double omega = base_.energy - st.energy;
            if (std::abs(omega) > opt_.thresholds.max_energy) {
                ++r.beyond_cap;
                continue;
            }
            SpectralLine line;
            line.k = k;
            line.omega = omega;
            line.weight = normalized_weight(st, base_);
            line.tag = job.tag;
            line.removal = job.removal;
            line.type = classify(q, k);
            r.weight += line.weight;
            r.lines.push_back(line);
            if (opt_.check_disjoint) r.members.push_back(q);
        }
        r.dead = members > 0 && r.failures.empty() && r.weight < floor_;
        return r;
    }

    std::vector<ClassResult> evaluate(const std::vector<ClassJob>& jobs) const {
        std::vector<ClassResult> out(jobs.size());
        const int workers = std::max(1, std::min(opt_.workers, static_cast<int>(jobs.size())));
        if (workers == 1) {
            for (size_t i = 0; i < jobs.size(); ++i) out[i] = run_class(jobs[i]);
            return out;
        }
        std::atomic<size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto work = [&] {
            for (size_t i; (i = next++) < jobs.size();) {
                try {
                    out[i] = run_class(jobs[i]);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        };
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        pool.clear();
        if (failure) std::rethrow_exception(failure);
        return out;
    }

    // ---- checkpointing ------------------------------------------------------

    static std::string wave_key(const ExcitationTag& w) { return fmt::format("{}/{}/{}", w.N_p, w.P_m, w.P_l); }

    nlohmann::json header() const {
        return {{"run_id", opt_.run_id},
                {"c", base_.params.c},
                {"L", base_.params.L},
                {"N", base_.size()},
                {"base", base_.qns.twice_values()},
                {"shift", to_string(opt_.shift)}};
    }

    void open_checkpoint() {
        if (opt_.checkpoint.empty()) return;
        const auto& path = opt_.checkpoint;
        if (opt_.resume && std::filesystem::exists(path)) {
            std::ifstream is(path);
            std::string line;
            bool first = true;
            while (std::getline(is, line)) {
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(line);
                } catch (const nlohmann::json::parse_error&) {
                    break;  // torn final record of an interrupted run
                }
                if (first) {
                    if (j.value("header", nlohmann::json{}) != header())
                        throw InvalidArgument("scan: checkpoint " + path.string() + " belongs to a different run");
                    first = false;
                    continue;
                }
                stored_[j.at("wave").get<std::string>()] = j.at("classes");
            }
            if (!first) {
                // Rewrite without any torn tail so appends stay parseable.
                std::ofstream os(path, std::ios::trunc);
                os << nlohmann::json{{"header", header()}}.dump() << '\n';
                for (auto& [key, classes] : stored_)
                    os << nlohmann::json{{"wave", key}, {"classes", classes}}.dump() << '\n';
                ckpt_.open(path, std::ios::app);
                return;
            }
        }
        ckpt_.open(path, std::ios::trunc);
        if (!ckpt_) throw Error("scan: cannot open checkpoint " + path.string());
        ckpt_ << nlohmann::json{{"header", header()}}.dump() << '\n';
        ckpt_.flush();
    }

    std::optional<std::vector<ClassResult>> replay(const ExcitationTag& wave) const {
        const auto it = stored_.find(wave_key(wave));
        if (it == stored_.end()) return std::nullopt;
        std::vector<ClassResult> out;
        for (const auto& c : it->second) {
            ClassResult r;
            r.removal = c.at("p").get<int>();
            r.tag = {wave.P_m, wave.N_p, wave.P_l, c.at("N_l").get<int>()};
            r.weight = c.at("weight").get<double>();
            r.evaluated = c.at("evaluated").get<long>();
            r.beyond_cap = c.at("beyond_cap").get<long>();
            r.dead = c.at("dead").get<bool>();
            r.failures = c.at("failures").get<std::vector<std::string>>();
            for (const auto& l : c.at("lines")) {
                SpectralLine line;
                line.k = l.at(0).get<long>();
                line.omega = l.at(1).get<double>();
                line.weight = l.at(2).get<double>();
                line.type = type_class_from_string(l.at(3).get<std::string>());
                line.tag = r.tag;
                line.removal = r.removal;
                r.lines.push_back(line);
            }
            if (opt_.check_disjoint) {
                for (auto& q : enumerate_class(refs_[static_cast<size_t>(r.removal)], r.tag))
                    if (owns(r.removal, r.tag, q)) r.members.push_back(q);
            }
            out.push_back(std::move(r));
        }
        return out;
    }

    void record(const ExcitationTag& wave, const std::vector<ClassResult>& results) {
        if (!ckpt_.is_open()) return;
        nlohmann::json classes = nlohmann::json::array();
        for (const auto& r : results) {
            nlohmann::json lines = nlohmann::json::array();
            for (const auto& l : r.lines) lines.push_back({l.k, l.omega, l.weight, to_string(l.type)});
            classes.push_back({{"p", r.removal},
                               {"N_l", r.tag.N_l},
                               {"weight", r.weight},
                               {"evaluated", r.evaluated},
                               {"beyond_cap", r.beyond_cap},
                               {"dead", r.dead},
                               {"failures", r.failures},
                               {"lines", lines}});
        }
        ckpt_ << nlohmann::json{{"wave", wave_key(wave)}, {"classes", classes}}.dump() << '\n';
        ckpt_.flush();
    }

    const BetheState& base_;
    ScanOptions opt_;
    double floor_ = 0.0;
    int delta_ = 0;
    std::vector<QNConfig> refs_;
    std::vector<BetheState> ref_states_;
    std::map<Family, std::vector<std::pair<int, int>>> dead_;
    std::unordered_set<QNConfig, QNConfigHash> visited_;
    std::map<std::string, nlohmann::json> stored_;
    std::ofstream ckpt_;
};

}  // namespace detail

/**
 * Sum normalized weights of <r|Psi(0)|s> over (N-1)-particle states r,
 * removal index by removal index, class by class in the order (N_p, P_m,
 * P_l, N_l), until the sum rule reaches the saturation target or every class
 * family is exhausted or capped.
 */
[[nodiscard]] inline ScanReport scan(const BetheState& base, const ScanOptions& opt = {}) {
    return detail::Scanner(base, opt).run();
}

// ============================================================================
// Export
// ============================================================================

[[nodiscard]] inline nlohmann::json report_json(const ScanReport& r, const std::string& config_hash = {}) {
    double neg = 0.0, by_type[3] = {0.0, 0.0, 0.0};
    for (const auto& l : r.lines) {
        if (l.omega < 0) neg += l.weight;
        by_type[static_cast<int>(l.type)] += l.weight;
    }
    nlohmann::json j = {{"c", r.params.c},
                        {"L", r.params.L},
                        {"N", r.params.N},
                        {"base_qns", r.base.values()},
                        {"base_energy", r.base_energy},
                        {"parity_shift", to_string(r.shift)},
                        {"momentum_unit", "2pi/L"},
                        {"omega_convention", "E_base - E_intermediate"},
                        {"saturation", r.saturation},
                        {"lines", r.lines.size()},
                        {"classes_visited", r.classes_visited},
                        {"states_evaluated", r.states_evaluated},
                        {"beyond_energy_cap", r.beyond_energy_cap},
                        {"failures", r.failures},
                        {"truncation_reason", to_string(r.truncation)},
                        {"weight_negative_omega", neg},
                        {"weight_type_A", by_type[0]},
                        {"weight_type_B", by_type[1]},
                        {"weight_other", by_type[2]}};
    if (!config_hash.empty()) j["config_hash"] = config_hash;
    return j;
}

inline void write_lines_csv(const ScanReport& r, const std::filesystem::path& path, const std::string& config_hash = {}) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    if (!config_hash.empty()) os << "# config_hash=" << config_hash << '\n';
    os << "k_int,omega,weight,N_p,P_m,P_l,N_l,type_class\n";
    for (const auto& l : r.lines)
        os << fmt::format("{},{:.17g},{:.17g},{},{},{},{},{}\n", l.k, l.omega, l.weight, l.tag.N_p, l.tag.P_m,
                          l.tag.P_l, l.tag.N_l, to_string(l.type));
}

/// Inverse of write_lines_csv (tags, k, omega, weight, type; removal index is not stored).
[[nodiscard]] inline std::vector<SpectralLine> read_lines_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read " + path.string());
    std::vector<SpectralLine> out;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 8) throw Error("malformed line in " + path.string() + ": " + line);
        SpectralLine l;
        l.k = std::stol(f[0]);
        l.omega = std::stod(f[1]);
        l.weight = std::stod(f[2]);
        l.tag = {std::stoi(f[4]), std::stoi(f[3]), std::stoi(f[5]), std::stoi(f[6])};
        l.type = type_class_from_string(f[7]);
        out.push_back(l);
    }
    return out;
}

}  // namespace llspec

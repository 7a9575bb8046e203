#pragma once

// Benchmark environments: the restart (freshness) chain, the 3-state
// non-indexable arm, and the deadline-scheduling arm with its closed-form
// Whittle index.

#include <cmath>
#include <cstdio>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/restart.hpp"

namespace rmab {

// Truncated restart chain on states 1..x_max (dense indices 0..x_max-1).
// Active: -> 1 w.p. p, else age by one (capped). Passive: age by one (capped,
// so the top state self-loops). Reward r(x,u) = -w*x; the multiplier term is
// supplied by subsidized_reward.
inline ArmModel make_restart_arm(double p, double w, int x_max = 500) {
    RestartArmSpec{p, w, x_max}.check();
    ArmModel arm;
    const int n = x_max;
    arm.num_states = n;
    for (int u = 0; u < 2; ++u) {
        arm.kernel[u].assign(static_cast<std::size_t>(n) * n, 0.0);
        arm.reward[u].resize(static_cast<std::size_t>(n));
    }
    for (int i = 0; i < n; ++i) {
        const int x = i + 1;
        const int up = std::min(i + 1, n - 1);
        arm.kernel[0][static_cast<std::size_t>(i) * n + up] = 1.0;
        arm.kernel[1][static_cast<std::size_t>(i) * n + 0] += p;
        arm.kernel[1][static_cast<std::size_t>(i) * n + up] += 1.0 - p;
        arm.reward[0][static_cast<std::size_t>(i)] = -w * x;
        arm.reward[1][static_cast<std::size_t>(i)] = -w * x;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "restart_p%g_w%g", p, w);
    arm.label = buf;
    return arm;
}

// 3-state arm that defeats Whittle indexability; matrices and rewards are a
// fixed regression fixture.
inline ArmModel make_nonindexable_arm() {
    ArmModel arm;
    arm.num_states = 3;
    arm.kernel[0] = {0.005, 0.793, 0.202,
                     0.027, 0.558, 0.415,
                     0.736, 0.249, 0.015};
    arm.kernel[1] = {0.718, 0.254, 0.028,
                     0.347, 0.097, 0.556,
                     0.015, 0.956, 0.029};
    arm.reward[0] = {0.0, 0.0, 0.0};
    arm.reward[1] = {0.699, 0.362, 0.715};
    arm.label = "nonindexable3";
    return arm;
}

constexpr int kDeadlineMaxT = 12;
constexpr int kDeadlineMaxB = 9;

struct DeadlineState {
    int t = 0;
    int b = 0;
};

inline double deadline_penalty(int b) { return 0.2 * static_cast<double>(b) * static_cast<double>(b); }

// Reachable (T,B) grid with a dense packing ordered by T*10+B. The full grid
// has 130 cells; (0,B>0) cannot occur and (12,0) is outside the fresh-draw
// support and unreachable by countdown, leaving 120 states.
struct DeadlineSpace {
    std::vector<DeadlineState> states;          // dense index -> (T,B)
    std::vector<int> dense;                     // T*10+B -> dense index or -1

    DeadlineSpace() {
        dense.assign((kDeadlineMaxT + 1) * (kDeadlineMaxB + 1), -1);
        for (int t = 0; t <= kDeadlineMaxT; ++t)
            for (int b = 0; b <= kDeadlineMaxB; ++b) {
                const bool unreachable = (t == 0 && b > 0) || (t == kDeadlineMaxT && b == 0);
                if (unreachable) continue;
                dense[static_cast<std::size_t>(t * 10 + b)] = static_cast<int>(states.size());
                states.push_back({t, b});
            }
    }

    int size() const { return static_cast<int>(states.size()); }
    int index(int t, int b) const { return dense[static_cast<std::size_t>(t * 10 + b)]; }
    DeadlineState at(int i) const { return states[static_cast<std::size_t>(i)]; }

    static const DeadlineSpace& instance() {
        static const DeadlineSpace space;
        return space;
    }
};

// Pinned fresh-job distribution: uniform over {(0,0)} plus the 108 slots with
// 1<=T<=12, 1<=B<=9 (109 outcomes).
inline std::vector<std::pair<DeadlineState, double>> deadline_uniform_fresh() {
    std::vector<std::pair<DeadlineState, double>> q;
    q.push_back({{0, 0}, 1.0 / 109.0});
    for (int t = 1; t <= kDeadlineMaxT; ++t)
        for (int b = 1; b <= kDeadlineMaxB; ++b) q.push_back({{t, b}, 1.0 / 109.0});
    return q;
}

// Deadline-scheduling arm: serve (a=1) earns 1-c while work and time remain;
// at T=1 any leftover work B-a incurs the penalty F; expired slots redraw a
// fresh job.
inline ArmModel make_deadline_arm(double c, std::vector<std::pair<DeadlineState, double>> fresh = deadline_uniform_fresh()) {
    if (c < 0.0 || c > 1.0) throw std::invalid_argument("make_deadline_arm: c outside [0,1]");
    const DeadlineSpace& sp = DeadlineSpace::instance();
    double mass = 0.0;
    for (const auto& [s, pr] : fresh) {
        if (pr < 0.0) throw std::invalid_argument("make_deadline_arm: negative fresh probability");
        if (s.t < 0 || s.t > kDeadlineMaxT || s.b < 0 || s.b > kDeadlineMaxB || sp.index(s.t, s.b) < 0)
            throw std::invalid_argument("make_deadline_arm: fresh state outside the reachable grid");
        mass += pr;
    }
    if (std::fabs(mass - 1.0) > 1e-12) throw std::invalid_argument("make_deadline_arm: fresh distribution must sum to 1");

    ArmModel arm;
    const int n = sp.size();
    arm.num_states = n;
    for (int u = 0; u < 2; ++u) {
        arm.kernel[u].assign(static_cast<std::size_t>(n) * n, 0.0);
        arm.reward[u].assign(static_cast<std::size_t>(n), 0.0);
    }
    for (int i = 0; i < n; ++i) {
        const DeadlineState s = sp.at(i);
        for (int a = 0; a < 2; ++a) {
            double reward = 0.0;
            if (s.b > 0) {
                const int served = std::min(a, s.b);
                reward = (1.0 - c) * served;
                if (s.t == 1) reward -= deadline_penalty(s.b - served);
            }
            arm.reward[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] = reward;
            if (s.t > 1) {
                const int nb = std::max(s.b - a, 0);
                arm.kernel[static_cast<std::size_t>(a)][static_cast<std::size_t>(i) * n + sp.index(s.t - 1, nb)] = 1.0;
            } else {
                for (const auto& [f, pr] : fresh)
                    arm.kernel[static_cast<std::size_t>(a)][static_cast<std::size_t>(i) * n + sp.index(f.t, f.b)] += pr;
            }
        }
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "deadline_c%g", c);
    arm.label = buf;
    return arm;
}

// Closed-form deadline Whittle index, three branches, formula kept verbatim
// from its source (the numeric whittle_index gives an independent check).
inline double deadline_whittle(int t, int b, double c) {
    if (t < 0 || b < 0) throw std::invalid_argument("deadline_whittle: negative state");
    if (b == 0) return 0.0;
    if (b <= t - 1) return 1.0 - c;
    return deadline_penalty(b - t - 1) - deadline_penalty(b - t) + 1.0 - c;
}

inline IndexTable deadline_whittle_table(double c, std::string label = {}) {
    const DeadlineSpace& sp = DeadlineSpace::instance();
    IndexTable t;
    t.source = IndexSource::whittle;
    t.arm_label = std::move(label);
    t.values.resize(static_cast<std::size_t>(sp.size()));
    for (int i = 0; i < sp.size(); ++i) {
        const DeadlineState s = sp.at(i);
        t.values[static_cast<std::size_t>(i)] = deadline_whittle(s.t, s.b, c);
    }
    return t;
}

}  // namespace rmab

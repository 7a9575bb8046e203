#pragma once

// Closed-form machinery for the restart (freshness/age) model: threshold
// policies, renewal-cycle gains, dual optimization for lambda*, relative
// values, the closed-form Lagrangian index, and the online dual learner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/exact.hpp"

namespace rmab {

struct RestartArmSpec {
    double p = 0.5;
    double w = 1.0;
    int x_max = 500;

    void check() const {
        if (!(p > 0.0) || !(p <= 1.0)) throw std::invalid_argument("RestartArmSpec: p must lie in (0,1]");
        if (!(w > 0.0)) throw std::invalid_argument("RestartArmSpec: w must be positive");
        if (x_max < 3) throw std::invalid_argument("RestartArmSpec: x_max must be at least 3");
    }
};

struct RestartSolution {
    int threshold = 1;
    double gain = 0.0;
    double lambda = 0.0;
    double tilde_x = 0.0;
    bool boundary_tie = false;
};

// Positive root of p*w*x^2 + 2w(1-p)x + (2*lambda - w(1-p)) = 0. When the
// discriminant is negative (large positive lambda) the gain is increasing in
// probing frequency, so we return 0: always probe after clamping.
inline double continuous_threshold(double p, double w, double lambda) {
    if (!(p > 0.0)) throw std::invalid_argument("continuous_threshold: p must be positive");
    if (!(w > 0.0)) throw std::invalid_argument("continuous_threshold: w must be positive");
    const double disc = (1.0 - p) - 2.0 * lambda * p / w;
    if (disc < 0.0) return 0.0;
    return (std::sqrt(disc) - (1.0 - p)) / p;
}

// Renewal gain of the threshold-x_bar policy: climb x_bar-1 steps passively,
// then probe until success (Geometric(p)).
inline double cycle_gain(double p, double w, double lambda, long x_bar) {
    if (x_bar < 1) throw std::invalid_argument("cycle_gain: x_bar must be >= 1");
    const double xb = static_cast<double>(x_bar);
    const double num = -w * (xb - 1.0) * xb / 2.0 - w * ((xb - 1.0) / p + 1.0 / (p * p)) + lambda / p;
    const double den = xb - 1.0 + 1.0 / p;
    return num / den;
}

inline RestartSolution optimal_gain(double p, double w, double lambda) {
    RestartSolution sol;
    sol.lambda = lambda;
    sol.tilde_x = continuous_threshold(p, w, lambda);
    const long lo = std::max(1L, static_cast<long>(std::floor(sol.tilde_x)));
    const long hi = std::max(1L, static_cast<long>(std::ceil(sol.tilde_x)));
    const double glo = cycle_gain(p, w, lambda, lo);
    const double ghi = cycle_gain(p, w, lambda, hi);
    sol.boundary_tie = std::fabs(glo - ghi) <= 1e-12;
    if (ghi > glo) {
        sol.threshold = static_cast<int>(hi);
        sol.gain = ghi;
    } else {
        sol.threshold = static_cast<int>(lo);
        sol.gain = glo;
    }
    return sol;
}

// Long-run fraction of active steps under threshold x_bar: 1/p active steps
// per renewal cycle of expected length x_bar-1+1/p. (The companion identity
// 1/(x_bar-1+1/p) is the renewal rate, i.e. the stationary mass of state 1.)
inline double activation_frequency(double p, long x_bar) {
    if (x_bar < 1) throw std::invalid_argument("activation_frequency: x_bar must be >= 1");
    if (!(p > 0.0) || !(p > 0.0 && p <= 1.0))
        throw std::invalid_argument("activation_frequency: p must lie in (0,1]");
    return (1.0 / p) / (static_cast<double>(x_bar) - 1.0 + 1.0 / p);
}

// Relative values V(1..x_max) anchored at V(1)=0. Branch 1 (x < threshold)
// telescopes the passive recursion; branch 2 solves the active-region Bellman
// equation, whose homogeneous coefficient is analytically zero at the
// converged gain and is clamped against rounding noise.
inline std::vector<double> relative_values(const RestartArmSpec& spec, double lambda, const RestartSolution& sol) {
    spec.check();
    const double p = spec.p, w = spec.w, g = sol.gain;
    const long xb = sol.threshold;
    auto branch1 = [&](double x) { return g * (x - 1.0) + w * (x - 1.0) * x / 2.0; };
    double particular_k, c0 = 0.0;
    if (p < 1.0) {
        particular_k = (p * (lambda - g) - w * (1.0 - p)) / (p * p);
        const double part_xb = particular_k - (w / p) * static_cast<double>(xb);
        c0 = branch1(static_cast<double>(xb)) - part_xb;
        if (std::fabs(c0) <= 1e-9 * std::max(1.0, std::fabs(part_xb))) c0 = 0.0;
    } else {
        particular_k = lambda - g;  // degenerate branch: V(x) = lambda - g - w*x
    }
    std::vector<double> v(static_cast<std::size_t>(spec.x_max));
    for (long x = 1; x <= spec.x_max; ++x) {
        double val;
        if (x < xb) {
            val = branch1(static_cast<double>(x));
        } else if (p < 1.0) {
            val = particular_k - (w / p) * static_cast<double>(x) +
                  c0 * std::pow(1.0 - p, static_cast<double>(xb - x));
        } else {
            val = particular_k - w * static_cast<double>(x);
        }
        v[static_cast<std::size_t>(x - 1)] = val;
    }
    return v;
}

// Pointwise V(x), valid for any x >= 1 (no truncation needed).
inline double relative_value_at(const RestartArmSpec& spec, double lambda, const RestartSolution& sol, long x) {
    if (x < 1) throw std::invalid_argument("relative_value_at: x must be >= 1");
    const double p = spec.p, w = spec.w, g = sol.gain;
    const long xb = sol.threshold;
    if (x < xb) return g * (x - 1.0) + w * (x - 1.0) * x / 2.0;
    if (p < 1.0) {
        const double k = (p * (lambda - g) - w * (1.0 - p)) / (p * p);
        return k - (w / p) * static_cast<double>(x);
    }
    return (lambda - g) - w * static_cast<double>(x);
}

// Closed-form Lagrangian index gamma(x) = lambda - p*V(x+1) at the given
// multiplier (Theorem-style expression; exact at the converged gain).
inline double restart_index(const RestartArmSpec& spec, double lambda, long x) {
    const RestartSolution sol = optimal_gain(spec.p, spec.w, lambda);
    return lambda - spec.p * relative_value_at(spec, lambda, sol, x + 1);
}

inline IndexTable restart_index_table(const RestartArmSpec& spec, double lambda, std::string label = {}) {
    const RestartSolution sol = optimal_gain(spec.p, spec.w, lambda);
    IndexTable t;
    t.source = IndexSource::lagrangian;
    t.lambda = lambda;
    t.arm_label = std::move(label);
    t.values.resize(static_cast<std::size_t>(spec.x_max));
    for (long x = 1; x <= spec.x_max; ++x)
        t.values[static_cast<std::size_t>(x - 1)] = lambda - spec.p * relative_value_at(spec, lambda, sol, x + 1);
    return t;
}

// Classical Whittle index of restart state x by bisecting the closed-form
// active-bonus index in the subsidy variable (the restart model is
// indexable, so the root is unique).
inline double restart_whittle(const RestartArmSpec& spec, long x, double tol = 1e-10) {
    auto h = [&](double subsidy) { return restart_index(spec, -subsidy, x); };
    double lo = 0.0, hi = std::max(1.0, spec.w);
    while (h(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e12) throw BracketError("restart_whittle: no sign change found");
    }
    while (h(lo) < 0.0) {
        lo = lo == 0.0 ? -1.0 : lo * 2.0;
        if (lo < -1e12) throw BracketError("restart_whittle: no sign change found");
    }
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (h(mid) >= 0.0) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct RestartTypeState {
    RestartArmSpec spec;
    int count = 1;
};

// Dual optimum over the restart family: minimize sum_i g_opt_i(lambda) -
// lambda*alpha*N by golden section over the closed-form gains.
inline DualSolution restart_lambda_star(const std::vector<RestartTypeState>& types, double alpha,
                                        std::optional<std::pair<double, double>> bracket = std::nullopt,
                                        double tol = 1e-9) {
    if (types.empty()) throw std::invalid_argument("restart_lambda_star: no arm types");
    if (!(alpha > 0.0) || !(alpha <= 1.0))
        throw std::invalid_argument("restart_lambda_star: alpha outside (0,1]");
    long n = 0;
    double wmax = 0.0;
    for (const RestartTypeState& t : types) {
        t.spec.check();
        if (t.count <= 0) throw std::invalid_argument("restart_lambda_star: counts must be positive");
        n += t.count;
        wmax = std::max(wmax, t.spec.w);
    }
    DualSolution sol;

    auto activation_at = [&](double lam) {
        double act = 0.0;
        for (const RestartTypeState& t : types)
            act += t.count * activation_frequency(t.spec.p, optimal_gain(t.spec.p, t.spec.w, lam).threshold);
        return act / static_cast<double>(n);
    };
    auto dual = [&](double lam) {
        double total = 0.0;
        for (const RestartTypeState& t : types)
            total += t.count * optimal_gain(t.spec.p, t.spec.w, lam).gain;
        return total - lam * alpha * static_cast<double>(n);
    };

    if (activation_at(0.0) <= alpha + 1e-12) {
        sol.lambda_star = 0.0;
        sol.boundary = true;
        sol.dual_value = dual(0.0);
        sol.activation_fraction = activation_at(0.0);
        return sol;
    }

    const std::pair<double, double> br = bracket ? *bracket : std::make_pair(-2000.0 * wmax, 10.0 * wmax);
    sol.lambda_star = detail::golden_min(dual, br.first, br.second, tol);
    sol.dual_value = dual(sol.lambda_star);
    sol.activation_fraction = activation_at(sol.lambda_star);

    if (std::fabs(sol.activation_fraction - alpha) > 1e-9) {
        // The marginal type randomizes between its two neighboring thresholds;
        // pick the type whose integer gains are closest to tied.
        int bt = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < types.size(); ++t) {
            const RestartSolution rs = optimal_gain(types[t].spec.p, types[t].spec.w, sol.lambda_star);
            const long alt = std::max(1L, rs.tilde_x > rs.threshold ? rs.threshold + 1L : rs.threshold - 1L);
            const double margin = std::fabs(rs.gain - cycle_gain(types[t].spec.p, types[t].spec.w, sol.lambda_star, alt));
            if (margin < best) { best = margin; bt = static_cast<int>(t); }
        }
        const RestartTypeState& marg = types[static_cast<std::size_t>(bt)];
        const RestartSolution rs = optimal_gain(marg.spec.p, marg.spec.w, sol.lambda_star);
        const long alt = std::max(1L, rs.tilde_x > rs.threshold ? rs.threshold + 1L : rs.threshold - 1L);
        const long t_lo = std::min<long>(rs.threshold, alt);  // boundary state: active only under the lower threshold
        const double f_more = activation_frequency(marg.spec.p, t_lo);
        const double f_less = activation_frequency(marg.spec.p, t_lo + 1);
        if (std::fabs(f_more - f_less) > 1e-15) {
            const double others = sol.activation_fraction * static_cast<double>(n) -
                                  marg.count * activation_frequency(marg.spec.p, rs.threshold);
            const double target = (alpha * static_cast<double>(n) - others) / marg.count;
            const double theta = std::clamp((target - f_less) / (f_more - f_less), 0.0, 1.0);
            sol.randomization = Randomization{bt, static_cast<int>(t_lo), theta};
            sol.activation_fraction = (others + marg.count * (theta * f_more + (1.0 - theta) * f_less)) /
                                      static_cast<double>(n);
        }
    }
    return sol;
}

struct OnlineRestartTrace {
    std::vector<long> sampled_steps;
    std::vector<double> lambda_trace;        // lambda_n after each step
    std::vector<double> avg_reward_trace;    // running time-average of true reward
    double final_lambda = 0.0;
    double average_reward = 0.0;
    std::vector<double> activation_rate;     // per arm
    std::uint64_t seed = 0;
};

// Algorithm-4 style online loop: closed-form Q-differences at the current
// lambda drive per-arm epsilon-greedy actions; the dual descends on the
// activation surplus. Arm dynamics are simulated from the specs (restart to
// 1 on success, otherwise age by 1, untruncated).
inline OnlineRestartTrace online_restart_learner(const std::vector<RestartTypeState>& types, int m, long steps,
                                                 const std::function<double(long)>& beta, double epsilon,
                                                 std::uint64_t seed, int trace_stride = 1, double lambda0 = 0.0) {
    if (m < 1) throw std::invalid_argument("online_restart_learner: M must be >= 1");
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("online_restart_learner: epsilon outside [0,1]");
    std::vector<std::pair<const RestartArmSpec*, long>> arms;  // (spec, current state)
    for (const RestartTypeState& t : types) {
        t.spec.check();
        for (int k = 0; k < t.count; ++k) arms.emplace_back(&t.spec, 1L);
    }
    if (m >= static_cast<int>(arms.size()))
        throw std::invalid_argument("online_restart_learner: M must be below N");
    Rng rng(seed);
    OnlineRestartTrace out;
    out.seed = seed;
    out.activation_rate.assign(arms.size(), 0.0);
    double lambda = lambda0, reward_sum = 0.0;
    for (long n = 1; n <= steps; ++n) {
        // Per-type closed forms at the current lambda.
        std::vector<RestartSolution> sols;
        sols.reserve(types.size());
        for (const RestartTypeState& t : types) sols.push_back(optimal_gain(t.spec.p, t.spec.w, lambda));
        long active = 0;
        std::size_t arm_idx = 0;
        for (std::size_t t = 0; t < types.size(); ++t) {
            for (int k = 0; k < types[t].count; ++k, ++arm_idx) {
                auto& [spec, x] = arms[arm_idx];
                const double gamma = lambda - spec->p * relative_value_at(*spec, lambda, sols[t], x + 1);
                int u;
                if (canonical_u01(rng) < epsilon) {
                    u = static_cast<int>(uniform_below(rng, 2));
                } else if (gamma > 0.0) {
                    u = 1;
                } else if (gamma < 0.0) {
                    u = 0;
                } else {
                    u = static_cast<int>(uniform_below(rng, 2));
                }
                reward_sum += -spec->w * static_cast<double>(x);
                if (u == 1) {
                    ++active;
                    out.activation_rate[arm_idx] += 1.0;
                    x = canonical_u01(rng) < spec->p ? 1L : x + 1L;
                } else {
                    x += 1L;
                }
            }
        }
        lambda -= beta(n) * (static_cast<double>(active) - static_cast<double>(m));
        if (n % trace_stride == 0 || n == steps) {
            out.sampled_steps.push_back(n);
            out.lambda_trace.push_back(lambda);
            out.avg_reward_trace.push_back(reward_sum / (static_cast<double>(n) * static_cast<double>(arms.size())));
        }
    }
    out.final_lambda = lambda;
    out.average_reward = steps > 0 ? reward_sum / (static_cast<double>(steps) * static_cast<double>(arms.size())) : 0.0;
    for (double& a : out.activation_rate) a /= static_cast<double>(std::max(steps, 1L));
    return out;
}

}  // namespace rmab

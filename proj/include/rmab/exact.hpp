#pragma once

// Ground-truth computations at fixed lambda: relative value iteration for
// Q-tables, Lagrangian/Whittle indices, indexability, dual optimization,
// stationary analysis, and a brute-force product-MDP oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <utility>

#include <Eigen/Dense>

#include "rmab/core.hpp"

namespace rmab {

struct QTable {
    int num_states = 0;
    std::vector<double> q0;
    std::vector<double> q1;
    double lambda = 0.0;
    double gain = 0.0;
    double residual = 0.0;
    long iterations = 0;

    double value(int x, int u) const { return u ? q1[static_cast<std::size_t>(x)] : q0[static_cast<std::size_t>(x)]; }
    double gamma(int x) const { return q1[static_cast<std::size_t>(x)] - q0[static_cast<std::size_t>(x)]; }
};

enum class IndexSource { lagrangian, whittle };

struct IndexTable {
    std::vector<double> values;
    IndexSource source = IndexSource::lagrangian;
    double lambda = 0.0;  // meaningful for lagrangian tables
    std::string arm_label;

    double at(int x) const { return values[static_cast<std::size_t>(x)]; }
    int num_states() const { return static_cast<int>(values.size()); }
};

struct Randomization {
    int type_index = 0;
    int state = 0;
    double probability = 0.0;
};

struct DualSolution {
    double lambda_star = 0.0;
    double dual_value = 0.0;
    double activation_fraction = 0.0;
    std::optional<Randomization> randomization;
    bool boundary = false;  // constraint slack at lambda=0
};

inline double f_norm_of(const std::vector<double>& q0, const std::vector<double>& q1) {
    double acc = 0.0;
    for (double v : q0) acc += v;
    for (double v : q1) acc += v;
    return acc / (2.0 * static_cast<double>(q0.size()));
}

// Relative value iteration with the Eq.-9 style normalizer: each synchronous
// sweep applies the Bellman operator and re-anchors so f(Q)=0; the gain is
// the anchor offset of the final sweep. Sweeps are damped halfway toward the
// backup (the aperiodicity transform): the fixed point and gain are
// unchanged, but policy chatter at threshold boundaries can no longer hold
// the iteration in a limit cycle. The reported residual stays the undamped
// Bellman residual.
inline QTable rvi_q(const ArmModel& arm, double lambda, double tol = 1e-10, long max_iter = 1000000) {
    if (tol <= 0.0) throw std::invalid_argument("rvi_q: tol must be positive");
    if (arm.num_states <= 0) throw std::invalid_argument("rvi_q: empty arm");
    const int n = arm.num_states;
    const CompiledArm ca(arm);
    constexpr double kDamp = 0.5;
    QTable q;
    q.num_states = n;
    q.lambda = lambda;
    q.q0.assign(static_cast<std::size_t>(n), 0.0);
    q.q1.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<double> vmax(static_cast<std::size_t>(n), 0.0), t0(q.q0), t1(q.q1);
    for (long it = 1; it <= max_iter; ++it) {
        for (int x = 0; x < n; ++x)
            vmax[static_cast<std::size_t>(x)] = std::max(q.q0[static_cast<std::size_t>(x)], q.q1[static_cast<std::size_t>(x)]);
        for (int x = 0; x < n; ++x) {
            t0[static_cast<std::size_t>(x)] = arm.r(x, 0) + ca.expect(x, 0, vmax);
            t1[static_cast<std::size_t>(x)] = arm.r(x, 1) + lambda + ca.expect(x, 1, vmax);
        }
        const double offset = f_norm_of(t0, t1);
        double diff = 0.0;
        for (int x = 0; x < n; ++x) {
            const double r0 = t0[static_cast<std::size_t>(x)] - offset - q.q0[static_cast<std::size_t>(x)];
            const double r1 = t1[static_cast<std::size_t>(x)] - offset - q.q1[static_cast<std::size_t>(x)];
            diff = std::max(diff, std::max(std::fabs(r0), std::fabs(r1)));
            q.q0[static_cast<std::size_t>(x)] += kDamp * r0;
            q.q1[static_cast<std::size_t>(x)] += kDamp * r1;
        }
        q.gain = offset;
        q.residual = diff;
        q.iterations = it;
        if (diff < tol) return q;
    }
    throw ConvergenceError("rvi_q: no convergence within max_iter", q.residual);
}

inline IndexTable lagrangian_index_table(const QTable& q, std::string arm_label = {}) {
    IndexTable t;
    t.source = IndexSource::lagrangian;
    t.lambda = q.lambda;
    t.arm_label = std::move(arm_label);
    t.values.resize(static_cast<std::size_t>(q.num_states));
    for (int x = 0; x < q.num_states; ++x) t.values[static_cast<std::size_t>(x)] = q.gamma(x);
    return t;
}

constexpr double kTieTol = 1e-9;

// States whose index is negative (or within the tie tolerance of zero).
inline std::set<int> passive_set(const ArmModel& arm, double lambda, double tol = 1e-10) {
    const QTable q = rvi_q(arm, lambda, tol);
    std::set<int> out;
    for (int x = 0; x < q.num_states; ++x)
        if (q.gamma(x) <= kTieTol) out.insert(x);
    return out;
}

struct WhittleResult {
    double value = 0.0;
    bool multiple_roots = false;
};

// Classical passive-subsidy Whittle index: the subsidy w making passive and
// active equally attractive in state x. Computed through the active-bonus
// solver via gamma_AB(x; -w); scans a coarse grid for the first sign change
// (ascending w), then bisects. Extra sign changes set the multiple_roots flag.
inline WhittleResult whittle_index(const ArmModel& arm, int x, std::pair<double, double> bracket,
                                   double tol = 1e-6, double solver_tol = 1e-10, int grid_points = 201) {
    if (bracket.second <= bracket.first) throw std::invalid_argument("whittle_index: bad bracket");
    check_state_action(arm, x, 0, "whittle_index");
    auto h = [&](double w) { return rvi_q(arm, -w, solver_tol).gamma(x); };
    const int g = std::max(grid_points, 3);
    std::vector<double> ws(static_cast<std::size_t>(g)), hs(static_cast<std::size_t>(g));
    for (int i = 0; i < g; ++i) {
        ws[static_cast<std::size_t>(i)] = bracket.first + (bracket.second - bracket.first) * i / (g - 1);
        hs[static_cast<std::size_t>(i)] = h(ws[static_cast<std::size_t>(i)]);
    }
    int first = -1, changes = 0;
    for (int i = 0; i + 1 < g; ++i) {
        if (hs[static_cast<std::size_t>(i)] == 0.0) {
            if (first < 0) first = i;
            ++changes;
            continue;
        }
        if (hs[static_cast<std::size_t>(i)] * hs[static_cast<std::size_t>(i) + 1] < 0.0) {
            if (first < 0) first = i;
            ++changes;
        }
    }
    if (first < 0) throw BracketError("whittle_index: no sign change in bracket");
    double lo = ws[static_cast<std::size_t>(first)], hi = ws[static_cast<std::size_t>(first) + 1];
    double flo = hs[static_cast<std::size_t>(first)];
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = h(mid);
        if (fm == 0.0) { lo = hi = mid; break; }
        if (flo * fm < 0.0) hi = mid;
        else { lo = mid; flo = fm; }
    }
    return {0.5 * (lo + hi), changes > 1};
}

struct IndexabilityReport {
    bool indexable = true;
    std::optional<std::pair<double, double>> violation;  // first adjacent grid pair breaking nestedness
    std::vector<std::size_t> passive_sizes;
};

// Indexable iff passive sets shrink monotonically along the ascending
// active-bonus grid (equivalently: grow with the classical passive subsidy).
inline IndexabilityReport indexability_check(const ArmModel& arm, const std::vector<double>& lambda_grid,
                                             double solver_tol = 1e-10) {
    if (lambda_grid.size() < 3) throw std::invalid_argument("indexability_check: need >= 3 grid points");
    for (std::size_t i = 0; i + 1 < lambda_grid.size(); ++i)
        if (!(lambda_grid[i] < lambda_grid[i + 1]))
            throw std::invalid_argument("indexability_check: grid must ascend");
    IndexabilityReport rep;
    std::set<int> prev;
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
        std::set<int> cur = passive_set(arm, lambda_grid[i], solver_tol);
        rep.passive_sizes.push_back(cur.size());
        if (i > 0 && rep.indexable) {
            const bool nested = std::includes(prev.begin(), prev.end(), cur.begin(), cur.end());
            if (!nested) {
                rep.indexable = false;
                rep.violation = std::make_pair(lambda_grid[i - 1], lambda_grid[i]);
            }
        }
        prev = std::move(cur);
    }
    return rep;
}

// Stationary distribution of the chain induced by a per-state activation
// probability, by direct linear solve; residual checked below 1e-12.
inline std::vector<double> stationary_distribution(const ArmModel& arm, const std::vector<double>& policy) {
    const int n = arm.num_states;
    if (static_cast<int>(policy.size()) != n)
        throw std::invalid_argument("stationary_distribution: policy size mismatch");
    for (double phi : policy)
        if (phi < 0.0 || phi > 1.0)
            throw std::invalid_argument("stationary_distribution: activation probability outside [0,1]");
    Eigen::MatrixXd P(n, n);
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            P(x, y) = (1.0 - policy[static_cast<std::size_t>(x)]) * arm.p(x, 0, y) +
                      policy[static_cast<std::size_t>(x)] * arm.p(x, 1, y);
    Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::VectorXd pi = A.partialPivLu().solve(b);
    // Power-iteration polish fixes the last digits and exposes singularity.
    for (int polish = 0; polish < 64; ++polish) {
        Eigen::VectorXd next = P.transpose() * pi;
        const double mass = next.sum();
        if (!(mass > 0.0) || !next.allFinite())
            throw std::runtime_error("stationary_distribution: singular or reducible chain");
        next /= mass;
        const double res = (P.transpose() * next - next).lpNorm<Eigen::Infinity>();
        pi = next;
        if (res < 1e-13) break;
    }
    const double res = (P.transpose() * pi - pi).lpNorm<Eigen::Infinity>();
    if (!(res < 1e-12) || pi.minCoeff() < -1e-12)
        throw std::runtime_error("stationary_distribution: no stationary solution at required residual");
    std::vector<double> out(static_cast<std::size_t>(n));
    double total = 0.0;
    for (int x = 0; x < n; ++x) {
        out[static_cast<std::size_t>(x)] = std::max(pi(x), 0.0);
        total += out[static_cast<std::size_t>(x)];
    }
    for (double& v : out) v /= total;
    return out;
}

// Average reward of a fixed activation policy (true reward plus lambda*u).
inline double policy_gain(const ArmModel& arm, const std::vector<double>& policy, double lambda) {
    const std::vector<double> pi = stationary_distribution(arm, policy);
    double g = 0.0;
    for (int x = 0; x < arm.num_states; ++x)
        g += pi[static_cast<std::size_t>(x)] *
             ((1.0 - policy[static_cast<std::size_t>(x)]) * arm.r(x, 0) +
              policy[static_cast<std::size_t>(x)] * (arm.r(x, 1) + lambda));
    return g;
}

// Greedy activation indicator from a converged table (ties passive).
inline std::vector<double> greedy_policy(const QTable& q) {
    std::vector<double> phi(static_cast<std::size_t>(q.num_states));
    for (int x = 0; x < q.num_states; ++x)
        phi[static_cast<std::size_t>(x)] = q.gamma(x) > kTieTol ? 1.0 : 0.0;
    return phi;
}

namespace detail {

struct TypeWeight {
    const ArmModel* arm;
    int count;
};

inline std::vector<TypeWeight> type_weights(const std::vector<ArmModel>& arms) {
    std::vector<TypeWeight> out;
    out.reserve(arms.size());
    for (const ArmModel& a : arms) out.push_back({&a, 1});
    return out;
}

inline std::vector<TypeWeight> type_weights(const BanditInstance& inst) {
    std::vector<TypeWeight> out;
    const std::vector<int> counts = inst.type_counts();
    for (int t = 0; t < inst.num_types(); ++t)
        out.push_back({&inst.models[static_cast<std::size_t>(t)], counts[static_cast<std::size_t>(t)]});
    return out;
}

inline double dual_of(const std::vector<TypeWeight>& types, double lambda, double alpha, double tol) {
    double total = 0.0;
    long n = 0;
    for (const TypeWeight& tw : types) {
        total += tw.count * rvi_q(*tw.arm, lambda, tol).gain;
        n += tw.count;
    }
    return total - lambda * alpha * static_cast<double>(n);
}

inline double greedy_activation(const std::vector<TypeWeight>& types, double lambda, double tol) {
    double act = 0.0;
    long n = 0;
    for (const TypeWeight& tw : types) {
        const QTable q = rvi_q(*tw.arm, lambda, tol);
        const std::vector<double> phi = greedy_policy(q);
        const std::vector<double> pi = stationary_distribution(*tw.arm, phi);
        double a = 0.0;
        for (int x = 0; x < q.num_states; ++x) a += pi[static_cast<std::size_t>(x)] * phi[static_cast<std::size_t>(x)];
        act += tw.count * a;
        n += tw.count;
    }
    return act / static_cast<double>(n);
}

// Golden-section minimizer for convex piecewise-linear duals; widens the
// bracket when the minimizer pins an endpoint.
inline double golden_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
    constexpr double kInvPhi = 0.6180339887498949;
    for (int attempt = 0; attempt < 4; ++attempt) {
        double a = lo, b = hi;
        double c = b - kInvPhi * (b - a);
        double d = a + kInvPhi * (b - a);
        double fc = f(c), fd = f(d);
        while (b - a > tol) {
            if (fc < fd) {
                b = d; d = c; fd = fc;
                c = b - kInvPhi * (b - a);
                fc = f(c);
            } else {
                a = c; c = d; fc = fd;
                d = a + kInvPhi * (b - a);
                fd = f(d);
            }
        }
        const double mid = 0.5 * (a + b);
        const double width = hi - lo;
        if (mid - lo < 2.0 * tol + 1e-12 * width) { lo -= width; continue; }
        if (hi - mid < 2.0 * tol + 1e-12 * width) { hi += width; continue; }
        return mid;
    }
    throw BracketError("golden_min: minimizer escaped the bracket after widening");
}

}  // namespace detail

inline double dual_value(const std::vector<ArmModel>& arms, double lambda, double alpha, double tol = 1e-10) {
    return detail::dual_of(detail::type_weights(arms), lambda, alpha, tol);
}

inline double dual_value(const BanditInstance& inst, double lambda, double tol = 1e-10) {
    return detail::dual_of(detail::type_weights(inst), lambda, inst.alpha(), tol);
}

namespace detail {

inline DualSolution optimal_lambda_impl(const std::vector<TypeWeight>& types, double alpha,
                                        std::pair<double, double> bracket, double tol, double solver_tol) {
    if (!(alpha > 0.0) || !(alpha <= 1.0)) throw std::invalid_argument("optimal_lambda: alpha outside (0,1]");
    DualSolution sol;
    long n = 0;
    for (const TypeWeight& tw : types) n += tw.count;

    const double act0 = greedy_activation(types, 0.0, solver_tol);
    if (act0 <= alpha + 1e-12) {
        sol.lambda_star = 0.0;
        sol.boundary = true;
        sol.dual_value = dual_of(types, 0.0, alpha, solver_tol);
        sol.activation_fraction = act0;
        return sol;
    }

    auto dual = [&](double lam) { return dual_of(types, lam, alpha, solver_tol); };
    sol.lambda_star = golden_min(dual, bracket.first, bracket.second, tol);
    sol.dual_value = dual(sol.lambda_star);

    // Activation attained by the greedy policies at lambda*; if it misses
    // alpha, randomize the most marginal state to restore equality.
    std::vector<QTable> qs;
    qs.reserve(types.size());
    for (const TypeWeight& tw : types) qs.push_back(rvi_q(*tw.arm, sol.lambda_star, solver_tol));
    auto fraction_with = [&](int bt, int bx, double prob) {
        double act = 0.0;
        for (std::size_t t = 0; t < types.size(); ++t) {
            std::vector<double> phi = greedy_policy(qs[t]);
            if (static_cast<int>(t) == bt) phi[static_cast<std::size_t>(bx)] = prob;
            const std::vector<double> pi = stationary_distribution(*types[t].arm, phi);
            double a = 0.0;
            for (int x = 0; x < qs[t].num_states; ++x)
                a += pi[static_cast<std::size_t>(x)] * phi[static_cast<std::size_t>(x)];
            act += types[t].count * a;
        }
        return act / static_cast<double>(n);
    };
    sol.activation_fraction = fraction_with(-1, 0, 0.0);
    if (std::fabs(sol.activation_fraction - alpha) > 1e-9) {
        int bt = 0, bx = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < types.size(); ++t)
            for (int x = 0; x < qs[t].num_states; ++x)
                if (std::fabs(qs[t].gamma(x)) < best) {
                    best = std::fabs(qs[t].gamma(x));
                    bt = static_cast<int>(t);
                    bx = x;
                }
        double lo = 0.0, hi = 1.0;
        const bool increasing = fraction_with(bt, bx, 1.0) > fraction_with(bt, bx, 0.0);
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            const bool below = fraction_with(bt, bx, mid) < alpha;
            if (below == increasing) lo = mid;
            else hi = mid;
        }
        const double prob = 0.5 * (lo + hi);
        const double attained = fraction_with(bt, bx, prob);
        if (std::fabs(attained - alpha) < std::fabs(sol.activation_fraction - alpha)) {
            sol.randomization = Randomization{bt, bx, prob};
            sol.activation_fraction = attained;
        }
    }
    return sol;
}

}  // namespace detail

inline std::pair<double, double> default_bracket(const std::vector<detail::TypeWeight>& types) {
    double rmax = 0.0;
    for (const auto& tw : types)
        for (int u = 0; u < 2; ++u)
            for (double r : tw.arm->reward[static_cast<std::size_t>(u)]) rmax = std::max(rmax, std::fabs(r));
    if (rmax == 0.0) rmax = 1.0;
    return {-10.0 * rmax, 10.0 * rmax};
}

inline DualSolution optimal_lambda(const std::vector<ArmModel>& arms, double alpha,
                                   std::optional<std::pair<double, double>> bracket = std::nullopt,
                                   double tol = 1e-6, double solver_tol = 1e-10) {
    const auto types = detail::type_weights(arms);
    return detail::optimal_lambda_impl(types, alpha, bracket ? *bracket : default_bracket(types), tol, solver_tol);
}

inline DualSolution optimal_lambda(const BanditInstance& inst,
                                   std::optional<std::pair<double, double>> bracket = std::nullopt,
                                   double tol = 1e-6, double solver_tol = 1e-10) {
    const auto types = detail::type_weights(inst);
    return detail::optimal_lambda_impl(types, inst.alpha(), bracket ? *bracket : default_bracket(types), tol, solver_tol);
}

struct OracleResult {
    double gain = 0.0;
    std::vector<int> policy;  // chosen M-subset id per product state
    long product_states = 0;
};

// Brute-force relative value iteration on the product MDP over exact-budget
// action subsets. Desk scale only; guarded by |X|^N * 2^N <= 1e7.
inline OracleResult product_mdp_oracle(const BanditInstance& inst, double tol = 1e-9, long max_iter = 2000000) {
    inst.check();
    const int n_arms = inst.num_arms();
    double guard = std::pow(2.0, n_arms);
    for (int i = 0; i < n_arms; ++i) guard *= inst.model(i).num_states;
    if (!(guard <= 1e7)) throw std::invalid_argument("product_mdp_oracle: instance exceeds the enumeration guard");

    std::vector<int> sizes(static_cast<std::size_t>(n_arms));
    long total = 1;
    for (int i = 0; i < n_arms; ++i) {
        sizes[static_cast<std::size_t>(i)] = inst.model(i).num_states;
        total *= sizes[static_cast<std::size_t>(i)];
    }

    // All subsets of size exactly M, as bitmasks.
    std::vector<std::uint32_t> actions;
    for (std::uint32_t mask = 0; mask < (1u << n_arms); ++mask)
        if (__builtin_popcount(mask) == inst.budget) actions.push_back(mask);

    auto decode = [&](long s, std::vector<int>& xs) {
        for (int i = 0; i < n_arms; ++i) {
            xs[static_cast<std::size_t>(i)] = static_cast<int>(s % sizes[static_cast<std::size_t>(i)]);
            s /= sizes[static_cast<std::size_t>(i)];
        }
    };

    std::vector<double> v(static_cast<std::size_t>(total), 0.0), nv(static_cast<std::size_t>(total), 0.0);
    std::vector<int> pol(static_cast<std::size_t>(total), 0);
    std::vector<int> xs(static_cast<std::size_t>(n_arms));
    double gain = 0.0;

    for (long it = 1; it <= max_iter; ++it) {
        for (long s = 0; s < total; ++s) {
            decode(s, xs);
            double best = -std::numeric_limits<double>::infinity();
            int best_a = 0;
            for (std::size_t ai = 0; ai < actions.size(); ++ai) {
                const std::uint32_t mask = actions[ai];
                double reward = 0.0;
                for (int i = 0; i < n_arms; ++i)
                    reward += inst.model(i).r(xs[static_cast<std::size_t>(i)], (mask >> i) & 1u);
                // Expected next value: recursive product over per-arm rows.
                double ev = 0.0;
                std::function<void(int, long, long, double)> rec = [&](int i, long idx, long stride, double prob) {
                    if (prob == 0.0) return;
                    if (i == n_arms) {
                        ev += prob * v[static_cast<std::size_t>(idx)];
                        return;
                    }
                    const ArmModel& m = inst.model(i);
                    const double* row = m.row(xs[static_cast<std::size_t>(i)], static_cast<int>((mask >> i) & 1u));
                    for (int y = 0; y < sizes[static_cast<std::size_t>(i)]; ++y)
                        if (row[y] > 0.0) rec(i + 1, idx + stride * y, stride * sizes[static_cast<std::size_t>(i)], prob * row[y]);
                };
                rec(0, 0, 1, 1.0);
                const double val = reward + ev;
                if (val > best) { best = val; best_a = static_cast<int>(ai); }
            }
            nv[static_cast<std::size_t>(s)] = best;
            pol[static_cast<std::size_t>(s)] = best_a;
        }
        double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
        for (long s = 0; s < total; ++s) {
            const double d = nv[static_cast<std::size_t>(s)] - v[static_cast<std::size_t>(s)];
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
        gain = 0.5 * (dmin + dmax);
        const double anchor = nv[0];
        for (long s = 0; s < total; ++s) v[static_cast<std::size_t>(s)] = nv[static_cast<std::size_t>(s)] - anchor;
        if (dmax - dmin < tol) {
            OracleResult res;
            res.gain = gain;
            res.policy = pol;
            res.product_states = total;
            return res;
        }
    }
    throw ConvergenceError("product_mdp_oracle: span did not contract within max_iter", 0.0);
}

}  // namespace rmab

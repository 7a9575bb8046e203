#pragma once

// Core types for restless-bandit arms and instances: dense two-action MDP
// models, the lambda sign convention, validation, and seeded sampling.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rmab {

using Rng = std::mt19937_64;

struct ConvergenceError : std::runtime_error {
    double residual;
    explicit ConvergenceError(const std::string& what, double res)
        : std::runtime_error(what), residual(res) {}
};

struct BracketError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Uniform double in [0,1) from the top 53 bits of the engine output.
inline double canonical_u01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Unbiased integer in [0, n) by rejection.
inline std::size_t uniform_below(Rng& rng, std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t draw;
    do { draw = rng(); } while (draw >= limit);
    return static_cast<std::size_t>(draw % n);
}

enum class LambdaConvention { active_bonus };

inline const char* lambda_convention_name(LambdaConvention c = LambdaConvention::active_bonus) {
    (void)c;
    return "active-bonus";
}

// One arm: finite-state two-action MDP with dense row-major kernels.
struct ArmModel {
    int num_states = 0;
    std::array<std::vector<double>, 2> kernel;  // kernel[u][x*n + y] = p(y|x,u)
    std::array<std::vector<double>, 2> reward;  // reward[u][x] = r(x,u)
    std::string label;

    double p(int x, int u, int y) const { return kernel[u][static_cast<std::size_t>(x) * num_states + y]; }
    double r(int x, int u) const { return reward[u][static_cast<std::size_t>(x)]; }
    const double* row(int x, int u) const { return kernel[u].data() + static_cast<std::size_t>(x) * num_states; }
};

inline void check_state_action(const ArmModel& arm, int x, int u, const char* where) {
    if (x < 0 || x >= arm.num_states)
        throw std::invalid_argument(std::string(where) + ": state out of range");
    if (u != 0 && u != 1)
        throw std::invalid_argument(std::string(where) + ": action must be 0 or 1");
}

// r(x,u) + lambda*u: the multiplier rides on the active action.
inline double subsidized_reward(const ArmModel& arm, int x, int u, double lambda) {
    check_state_action(arm, x, u, "subsidized_reward");
    return arm.r(x, u) + lambda * u;
}

struct RowDefect {
    int action;
    int state;
    double row_sum;
    bool negative_entry;
};

struct ValidationReport {
    std::vector<RowDefect> bad_rows;
    bool rewards_finite = true;
    bool irreducible = true;

    bool ok() const { return bad_rows.empty() && rewards_finite && irreducible; }
};

namespace detail {

inline void reach_from(const std::vector<std::vector<int>>& adj, int start, std::vector<char>& seen) {
    std::vector<int> stack{start};
    seen.assign(adj.size(), 0);
    seen[static_cast<std::size_t>(start)] = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(v)])
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                stack.push_back(w);
            }
    }
}

}  // namespace detail

// Row sums, entry signs, reward finiteness, and strong connectivity of the
// union graph over both actions. Report-only; callers decide whether to block.
inline ValidationReport validate_arm(const ArmModel& arm) {
    ValidationReport rep;
    const int n = arm.num_states;
    if (n <= 0) {
        rep.irreducible = false;
        return rep;
    }
    for (int u = 0; u < 2; ++u) {
        if (arm.kernel[u].size() != static_cast<std::size_t>(n) * n ||
            arm.reward[u].size() != static_cast<std::size_t>(n)) {
            rep.bad_rows.push_back({u, -1, 0.0, false});
            rep.irreducible = false;
            return rep;
        }
        for (int x = 0; x < n; ++x) {
            double sum = 0.0;
            bool neg = false;
            const double* row = arm.row(x, u);
            for (int y = 0; y < n; ++y) {
                if (row[y] < 0.0) neg = true;
                sum += row[y];
            }
            if (neg || std::fabs(sum - 1.0) > 1e-12)
                rep.bad_rows.push_back({u, x, sum, neg});
            if (!std::isfinite(arm.r(x, u))) rep.rewards_finite = false;
        }
    }
    std::vector<std::vector<int>> fwd(static_cast<std::size_t>(n)), bwd(static_cast<std::size_t>(n));
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            if (arm.p(x, 0, y) > 0.0 || arm.p(x, 1, y) > 0.0) {
                fwd[static_cast<std::size_t>(x)].push_back(y);
                bwd[static_cast<std::size_t>(y)].push_back(x);
            }
    std::vector<char> seen;
    detail::reach_from(fwd, 0, seen);
    for (char s : seen)
        if (!s) rep.irreducible = false;
    if (rep.irreducible) {
        detail::reach_from(bwd, 0, seen);
        for (char s : seen)
            if (!s) rep.irreducible = false;
    }
    return rep;
}

// Draw the next state from p(.|x,u) by walking the cumulative row.
inline int sample_transition(const ArmModel& arm, int x, int u, Rng& rng) {
    check_state_action(arm, x, u, "sample_transition");
    const double* row = arm.row(x, u);
    const double draw = canonical_u01(rng);
    double acc = 0.0;
    int last = 0;
    for (int y = 0; y < arm.num_states; ++y) {
        if (row[y] <= 0.0) continue;
        acc += row[y];
        last = y;
        if (draw < acc) return y;
    }
    return last;
}

// Sparse view of an arm for hot loops: nonzero entries per row plus a
// cumulative column for O(log nnz) sampling.
struct CompiledArm {
    int n = 0;
    const ArmModel* model = nullptr;
    std::array<std::vector<int>, 2> row_begin;   // size n+1
    std::array<std::vector<int>, 2> targets;
    std::array<std::vector<double>, 2> probs;
    std::array<std::vector<double>, 2> cumprobs;

    CompiledArm() = default;

    explicit CompiledArm(const ArmModel& arm) : n(arm.num_states), model(&arm) {
        for (int u = 0; u < 2; ++u) {
            row_begin[u].assign(static_cast<std::size_t>(n) + 1, 0);
            for (int x = 0; x < n; ++x) {
                const double* row = arm.row(x, u);
                double acc = 0.0;
                for (int y = 0; y < n; ++y) {
                    if (row[y] <= 0.0) continue;
                    acc += row[y];
                    targets[u].push_back(y);
                    probs[u].push_back(row[y]);
                    cumprobs[u].push_back(acc);
                }
                row_begin[u][static_cast<std::size_t>(x) + 1] = static_cast<int>(targets[u].size());
            }
        }
    }

    int sample(int x, int u, Rng& rng) const {
        const int lo = row_begin[u][static_cast<std::size_t>(x)];
        const int hi = row_begin[u][static_cast<std::size_t>(x) + 1];
        const double draw = canonical_u01(rng);
        int a = lo, b = hi - 1;
        while (a < b) {
            int mid = (a + b) / 2;
            if (draw < cumprobs[u][static_cast<std::size_t>(mid)]) b = mid;
            else a = mid + 1;
        }
        return targets[u][static_cast<std::size_t>(a)];
    }

    // Expected value of v over the next state from (x,u).
    double expect(int x, int u, const std::vector<double>& v) const {
        const int lo = row_begin[u][static_cast<std::size_t>(x)];
        const int hi = row_begin[u][static_cast<std::size_t>(x) + 1];
        double acc = 0.0;
        for (int k = lo; k < hi; ++k)
            acc += probs[u][static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(targets[u][static_cast<std::size_t>(k)])];
        return acc;
    }
};

// N arms with a hard per-step budget M. Arms of the same type share one
// ArmModel; type_of maps arm index -> type index.
struct BanditInstance {
    std::vector<ArmModel> models;
    std::vector<int> type_of;
    int budget = 0;

    int num_arms() const { return static_cast<int>(type_of.size()); }
    int num_types() const { return static_cast<int>(models.size()); }
    double alpha() const { return static_cast<double>(budget) / num_arms(); }
    const ArmModel& model(int arm) const { return models[static_cast<std::size_t>(type_of[static_cast<std::size_t>(arm)])]; }

    void check() const {
        const int n = num_arms();
        if (n < 2) throw std::invalid_argument("BanditInstance: need at least 2 arms");
        if (budget < 1 || budget >= n)
            throw std::invalid_argument("BanditInstance: budget must satisfy 1 <= M < N");
        for (int t : type_of)
            if (t < 0 || t >= num_types())
                throw std::invalid_argument("BanditInstance: type index out of range");
    }

    static BanditInstance homogeneous(ArmModel arm, int n_arms, int m) {
        BanditInstance inst;
        inst.models.push_back(std::move(arm));
        inst.type_of.assign(static_cast<std::size_t>(n_arms), 0);
        inst.budget = m;
        inst.check();
        return inst;
    }

    static BanditInstance from_types(std::vector<std::pair<ArmModel, int>> types, int m) {
        BanditInstance inst;
        for (auto& [arm, count] : types) {
            if (count <= 0) throw std::invalid_argument("BanditInstance: type count must be positive");
            const int t = static_cast<int>(inst.models.size());
            inst.models.push_back(std::move(arm));
            inst.type_of.insert(inst.type_of.end(), static_cast<std::size_t>(count), t);
        }
        inst.budget = m;
        inst.check();
        return inst;
    }

    std::vector<int> type_counts() const {
        std::vector<int> counts(static_cast<std::size_t>(num_types()), 0);
        for (int t : type_of) ++counts[static_cast<std::size_t>(t)];
        return counts;
    }
};

}  // namespace rmab

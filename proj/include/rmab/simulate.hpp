#pragma once

// Finite-N top-M simulation of index policies (LIP/WIP) and the uniform
// random baseline.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/exact.hpp"

namespace rmab {

struct SimStats {
    long horizon = 0;
    double average_reward = 0.0;           // time-averaged total (all arms)
    std::vector<double> moving_avg;        // windowed total reward, sampled per stride
    std::vector<long> sampled_steps;
    std::vector<int> budget_trace;         // activations at the sampled steps
    long budget_violations = 0;            // steps with sum(U) != M
    std::vector<double> activation_freq;   // per arm
    std::uint64_t seed = 0;
};

enum class PolicyKind { lip, wip, random_policy };

struct SimPolicy {
    PolicyKind kind = PolicyKind::random_policy;
    std::vector<IndexTable> tables;  // one per arm type; empty for random

    static SimPolicy lip(std::vector<IndexTable> t) { return {PolicyKind::lip, std::move(t)}; }
    static SimPolicy wip(std::vector<IndexTable> t) { return {PolicyKind::wip, std::move(t)}; }
    static SimPolicy random() { return {PolicyKind::random_policy, {}}; }
};

// Exactly M ones: strictly-greater values are active, the tied boundary group
// fills the remainder uniformly at random.
inline std::vector<std::uint8_t> top_m_select(const std::vector<double>& values, int m, Rng& rng) {
    const int n = static_cast<int>(values.size());
    if (m < 0 || m > n) throw std::invalid_argument("top_m_select: M outside [0,N]");
    std::vector<std::uint8_t> actions(static_cast<std::size_t>(n), 0);
    if (m == 0) return actions;
    std::vector<double> sorted(values);
    std::nth_element(sorted.begin(), sorted.begin() + (m - 1), sorted.end(), std::greater<double>());
    const double cutoff = sorted[static_cast<std::size_t>(m - 1)];
    std::vector<int> tied;
    int above = 0;
    for (int i = 0; i < n; ++i) {
        if (values[static_cast<std::size_t>(i)] > cutoff) {
            actions[static_cast<std::size_t>(i)] = 1;
            ++above;
        } else if (values[static_cast<std::size_t>(i)] == cutoff) {
            tied.push_back(i);
        }
    }
    int need = m - above;
    // Partial Fisher-Yates over the tied group.
    for (int k = 0; k < need; ++k) {
        const std::size_t j = k + uniform_below(rng, tied.size() - static_cast<std::size_t>(k));
        std::swap(tied[static_cast<std::size_t>(k)], tied[j]);
        actions[static_cast<std::size_t>(tied[static_cast<std::size_t>(k)])] = 1;
    }
    return actions;
}

// Steps the N-arm system under top-M selection by the policy's index tables
// (or uniformly random M-subsets), accumulating the true reward only.
inline SimStats simulate(const BanditInstance& inst, const SimPolicy& policy, long horizon, std::uint64_t seed,
                         int window = 5000, int stride = 100) {
    inst.check();
    const int n = inst.num_arms();
    const bool indexed = policy.kind != PolicyKind::random_policy;
    if (indexed) {
        if (static_cast<int>(policy.tables.size()) != inst.num_types())
            throw std::invalid_argument("simulate: need one index table per arm type");
        for (int t = 0; t < inst.num_types(); ++t)
            if (policy.tables[static_cast<std::size_t>(t)].num_states() != inst.models[static_cast<std::size_t>(t)].num_states)
                throw std::invalid_argument("simulate: index table size mismatch");
    }
    std::vector<CompiledArm> compiled;
    compiled.reserve(inst.models.size());
    for (const ArmModel& m : inst.models) compiled.emplace_back(m);

    Rng rng(seed);
    SimStats stats;
    stats.horizon = horizon;
    stats.seed = seed;
    stats.activation_freq.assign(static_cast<std::size_t>(n), 0.0);

    std::vector<int> state(static_cast<std::size_t>(n), 0);
    std::vector<double> ranks(static_cast<std::size_t>(n), 0.0);
    std::vector<double> window_buf(static_cast<std::size_t>(std::max(window, 1)), 0.0);
    double window_sum = 0.0, total = 0.0;

    for (long step = 1; step <= horizon; ++step) {
        if (indexed)
            for (int i = 0; i < n; ++i)
                ranks[static_cast<std::size_t>(i)] =
                    policy.tables[static_cast<std::size_t>(inst.type_of[static_cast<std::size_t>(i)])].at(state[static_cast<std::size_t>(i)]);
        const std::vector<std::uint8_t> actions = top_m_select(ranks, inst.budget, rng);
        int active = 0;
        double reward = 0.0;
        for (int i = 0; i < n; ++i) {
            const int u = actions[static_cast<std::size_t>(i)];
            active += u;
            stats.activation_freq[static_cast<std::size_t>(i)] += u;
            const int t = inst.type_of[static_cast<std::size_t>(i)];
            reward += inst.models[static_cast<std::size_t>(t)].r(state[static_cast<std::size_t>(i)], u);
            state[static_cast<std::size_t>(i)] = compiled[static_cast<std::size_t>(t)].sample(state[static_cast<std::size_t>(i)], u, rng);
        }
        if (active != inst.budget) ++stats.budget_violations;
        total += reward;
        const std::size_t slot = static_cast<std::size_t>(step % std::max(window, 1));
        window_sum += reward - window_buf[slot];
        window_buf[slot] = reward;
        if (step % stride == 0 || step == horizon) {
            stats.sampled_steps.push_back(step);
            stats.moving_avg.push_back(window_sum / static_cast<double>(std::min<long>(step, window)));
            stats.budget_trace.push_back(active);
        }
    }
    stats.average_reward = horizon > 0 ? total / static_cast<double>(horizon) : 0.0;
    for (double& f : stats.activation_freq) f /= static_cast<double>(std::max(horizon, 1L));
    return stats;
}

}  // namespace rmab

#pragma once

// Two-timescale tabular learners: per-arm epsilon-greedy RVI Q-learning with
// a slow dual ascent on the activation surplus (relaxed variant), and the
// hard-budget variant driving the dual from virtual actions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/exact.hpp"
#include "rmab/simulate.hpp"

namespace rmab {

struct StepSchedules {
    std::function<double(long)> alpha;  // fast scale, on the (type,state,action) visit counter
    std::function<double(long)> beta;   // slow scale, on the global step
};

inline StepSchedules builtin_schedules(const std::string& name = "default") {
    if (name != "default") throw std::invalid_argument("builtin_schedules: unknown schedule " + name);
    StepSchedules s;
    s.alpha = [](long k) { return 1.0 / std::ceil(static_cast<double>(std::max(k, 1L)) / 500.0); };
    s.beta = [](long n) {
        if (n <= 0) return 1.0;
        const double base = static_cast<double>(n) * std::log(static_cast<double>(n)) / 5000.0;
        return 1.0 / (std::ceil(base) + 1.0);
    };
    return s;
}

struct TabularQ {
    std::vector<double> q0;
    std::vector<double> q1;

    explicit TabularQ(int n = 0) : q0(static_cast<std::size_t>(n), 0.0), q1(static_cast<std::size_t>(n), 0.0) {}
    int num_states() const { return static_cast<int>(q0.size()); }
    double value(int x, int u) const { return u ? q1[static_cast<std::size_t>(x)] : q0[static_cast<std::size_t>(x)]; }
    double gamma(int x) const { return q1[static_cast<std::size_t>(x)] - q0[static_cast<std::size_t>(x)]; }
    double vmax(int x) const { return std::max(q0[static_cast<std::size_t>(x)], q1[static_cast<std::size_t>(x)]); }

    // Cached entry sum keeps the normalizer O(1) in the learning loop; it is
    // resynced periodically against accumulation drift.
    double cached_f() const { return entry_sum_ / (2.0 * static_cast<double>(q0.size())); }
    void add(int x, int u, double delta) {
        double& cell = u ? q1[static_cast<std::size_t>(x)] : q0[static_cast<std::size_t>(x)];
        cell += delta;
        entry_sum_ += delta;
        if ((++ops_ & 0x3FFF) == 0) resync();
    }
    void resync() {
        entry_sum_ = 0.0;
        for (double v : q0) entry_sum_ += v;
        for (double v : q1) entry_sum_ += v;
    }

private:
    double entry_sum_ = 0.0;
    unsigned long ops_ = 0;
};

inline double f_norm(const TabularQ& q) { return f_norm_of(q.q0, q.q1); }

// One RVI Q-learning update; touches only the (x,u) entry. A zero step is a
// no-op (frozen learner).
inline void q_step(const ArmModel& arm, TabularQ& q, int x, int u, int y, double lambda, double alpha_step) {
    if (alpha_step < 0.0 || alpha_step > 1.0) throw std::invalid_argument("q_step: alpha outside [0,1]");
    if (alpha_step == 0.0) return;
    check_state_action(arm, x, u, "q_step");
    check_state_action(arm, y, u, "q_step");
    const double target = subsidized_reward(arm, x, u, lambda) + q.vmax(y) - q.cached_f();
    q.add(x, u, alpha_step * (target - q.value(x, u)));
}

inline double dual_step(double lambda, double beta_step, long active_count, int m) {
    return lambda - beta_step * (static_cast<double>(active_count) - static_cast<double>(m));
}

inline int eps_greedy(double q_passive, double q_active, double epsilon, Rng& rng) {
    if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("eps_greedy: epsilon outside [0,1]");
    if (epsilon > 0.0 && canonical_u01(rng) < epsilon) return static_cast<int>(uniform_below(rng, 2));
    if (q_active > q_passive) return 1;
    if (q_active < q_passive) return 0;
    return static_cast<int>(uniform_below(rng, 2));
}

struct EpsPolicy {
    double initial = 1.0;
    bool decay = true;
    double factor = 0.99;    // applied once per global step
    double floor = 0.01;
};

struct LearnerState {
    std::vector<TabularQ> qtables;                 // one per arm type (shared within a type)
    std::vector<std::vector<long>> visits0;        // per type: visit counts for u=0
    std::vector<std::vector<long>> visits1;
    double lambda = 0.0;
    double epsilon = 1.0;
    long step = 0;
};

struct LearnResult {
    LearnerState state;
    std::vector<long> sampled_steps;
    std::vector<double> lambda_trace;
    std::vector<double> avg_reward_trace;     // moving-average total true reward
    std::vector<double> epsilon_trace;
    double average_reward = 0.0;
    long budget_violations = 0;               // hard-budget variant only
    std::uint64_t seed = 0;

    std::vector<IndexTable> index_tables(const BanditInstance& inst) const {
        std::vector<IndexTable> out;
        for (int t = 0; t < inst.num_types(); ++t) {
            IndexTable table;
            table.source = IndexSource::lagrangian;
            table.lambda = state.lambda;
            table.arm_label = inst.models[static_cast<std::size_t>(t)].label;
            const TabularQ& q = state.qtables[static_cast<std::size_t>(t)];
            table.values.resize(static_cast<std::size_t>(q.num_states()));
            for (int x = 0; x < q.num_states(); ++x) table.values[static_cast<std::size_t>(x)] = q.gamma(x);
            out.push_back(std::move(table));
        }
        return out;
    }
};

namespace detail {

struct LearnLoop {
    const BanditInstance& inst;
    const StepSchedules& sched;
    EpsPolicy eps;
    Rng rng;
    LearnerState st;
    std::vector<CompiledArm> compiled;
    std::vector<int> arm_state;
    std::vector<double> window_buf;
    double window_sum = 0.0;
    double total_reward = 0.0;
    int window = 5000;

    LearnLoop(const BanditInstance& instance, const StepSchedules& schedules, const EpsPolicy& eps_policy,
              std::uint64_t seed)
        : inst(instance), sched(schedules), eps(eps_policy), rng(seed) {
        inst.check();
        st.epsilon = eps.initial;
        for (const ArmModel& m : inst.models) {
            st.qtables.emplace_back(m.num_states);
            st.visits0.emplace_back(static_cast<std::size_t>(m.num_states), 0L);
            st.visits1.emplace_back(static_cast<std::size_t>(m.num_states), 0L);
            compiled.emplace_back(m);
        }
        arm_state.assign(static_cast<std::size_t>(inst.num_arms()), 0);
        window_buf.assign(static_cast<std::size_t>(window), 0.0);
    }

    // Executes (x,u) on arm i: Q update with the current lambda, then the
    // environment transition. Returns the true reward earned.
    double apply(int i, int u) {
        const int t = inst.type_of[static_cast<std::size_t>(i)];
        const int x = arm_state[static_cast<std::size_t>(i)];
        TabularQ& q = st.qtables[static_cast<std::size_t>(t)];
        auto& visits = u ? st.visits1[static_cast<std::size_t>(t)] : st.visits0[static_cast<std::size_t>(t)];
        const long k = ++visits[static_cast<std::size_t>(x)];
        const int y = compiled[static_cast<std::size_t>(t)].sample(x, u, rng);
        q_step(inst.models[static_cast<std::size_t>(t)], q, x, u, y, st.lambda, sched.alpha(k));
        arm_state[static_cast<std::size_t>(i)] = y;
        return inst.models[static_cast<std::size_t>(t)].r(x, u);
    }

    void finish_step(long n, double step_reward, LearnResult& out, int trace_stride, long steps) {
        total_reward += step_reward;
        const std::size_t slot = static_cast<std::size_t>(n % window);
        window_sum += step_reward - window_buf[slot];
        window_buf[slot] = step_reward;
        if (eps.decay) st.epsilon = std::max(eps.floor, eps.factor * st.epsilon);
        st.step = n;
        if (n % trace_stride == 0 || n == steps) {
            out.sampled_steps.push_back(n);
            out.lambda_trace.push_back(st.lambda);
            out.avg_reward_trace.push_back(window_sum / static_cast<double>(std::min<long>(n, window)));
            out.epsilon_trace.push_back(st.epsilon);
        }
    }
};

}  // namespace detail

// Relaxed-constraint learner: every arm picks its own epsilon-greedy action,
// the dual descends on the total activation surplus.
inline LearnResult run_alg1(const BanditInstance& inst, const StepSchedules& sched, const EpsPolicy& eps,
                            long steps, std::uint64_t seed, int trace_stride = 100, double lambda0 = 0.0) {
    detail::LearnLoop loop(inst, sched, eps, seed);
    loop.st.lambda = lambda0;
    LearnResult out;
    out.seed = seed;
    const int n_arms = inst.num_arms();
    for (long n = 1; n <= steps; ++n) {
        long active = 0;
        double reward = 0.0;
        for (int i = 0; i < n_arms; ++i) {
            const TabularQ& q = loop.st.qtables[static_cast<std::size_t>(inst.type_of[static_cast<std::size_t>(i)])];
            const int x = loop.arm_state[static_cast<std::size_t>(i)];
            const int u = eps_greedy(q.value(x, 0), q.value(x, 1), loop.st.epsilon, loop.rng);
            active += u;
            reward += loop.apply(i, u);
        }
        loop.st.lambda = dual_step(loop.st.lambda, loop.sched.beta(n), active, inst.budget);
        loop.finish_step(n, reward, out, trace_stride, steps);
    }
    out.average_reward = steps > 0 ? loop.total_reward / static_cast<double>(steps) : 0.0;
    out.state = std::move(loop.st);
    return out;
}

// Hard-budget learner: real actions are the top-M arms by current index
// (epsilon-exploring with a random M-subset), virtual per-arm epsilon-greedy
// actions feed the dual only; Q updates use the executed transitions.
inline LearnResult run_alg2(const BanditInstance& inst, const StepSchedules& sched, const EpsPolicy& eps,
                            long steps, std::uint64_t seed, int trace_stride = 100, double lambda0 = 0.0) {
    detail::LearnLoop loop(inst, sched, eps, seed);
    loop.st.lambda = lambda0;
    LearnResult out;
    out.seed = seed;
    const int n_arms = inst.num_arms();
    std::vector<double> ranks(static_cast<std::size_t>(n_arms));
    std::vector<double> zeros(static_cast<std::size_t>(n_arms), 0.0);
    for (long n = 1; n <= steps; ++n) {
        const bool explore = canonical_u01(loop.rng) < loop.st.epsilon;
        if (!explore)
            for (int i = 0; i < n_arms; ++i)
                ranks[static_cast<std::size_t>(i)] =
                    loop.st.qtables[static_cast<std::size_t>(inst.type_of[static_cast<std::size_t>(i)])].gamma(
                        loop.arm_state[static_cast<std::size_t>(i)]);
        const std::vector<std::uint8_t> actions =
            top_m_select(explore ? zeros : ranks, inst.budget, loop.rng);

        long virtual_active = 0;
        for (int i = 0; i < n_arms; ++i) {
            const TabularQ& q = loop.st.qtables[static_cast<std::size_t>(inst.type_of[static_cast<std::size_t>(i)])];
            const int x = loop.arm_state[static_cast<std::size_t>(i)];
            virtual_active += eps_greedy(q.value(x, 0), q.value(x, 1), loop.st.epsilon, loop.rng);
        }

        long active = 0;
        double reward = 0.0;
        for (int i = 0; i < n_arms; ++i) {
            const int u = actions[static_cast<std::size_t>(i)];
            active += u;
            reward += loop.apply(i, u);
        }
        if (active != inst.budget) ++out.budget_violations;
        loop.st.lambda = dual_step(loop.st.lambda, loop.sched.beta(n), virtual_active, inst.budget);
        loop.finish_step(n, reward, out, trace_stride, steps);
    }
    out.average_reward = steps > 0 ? loop.total_reward / static_cast<double>(steps) : 0.0;
    out.state = std::move(loop.st);
    return out;
}

}  // namespace rmab

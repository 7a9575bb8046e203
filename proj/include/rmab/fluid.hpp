#pragma once

// Deterministic fluid (population) dynamics: pooled index ranking with a
// split boundary group, fixed-point iteration with a multi-start attractor
// report, and the finite-N optimality-gap curve.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/exact.hpp"
#include "rmab/simulate.hpp"

namespace rmab {

// Mass per (type, state); total mass over all types is 1, each type's mass
// equals its arm fraction and is conserved by the flow.
struct PopulationState {
    std::vector<std::vector<double>> nu;

    double total_mass() const {
        double acc = 0.0;
        for (const auto& row : nu)
            for (double v : row) acc += v;
        return acc;
    }

    double l1_distance(const PopulationState& other) const {
        double acc = 0.0;
        for (std::size_t t = 0; t < nu.size(); ++t)
            for (std::size_t x = 0; x < nu[t].size(); ++x)
                acc += std::fabs(nu[t][x] - other.nu[t][x]);
        return acc;
    }
};

struct FluidCell {
    double value;
    int t;
    int x;
};

struct FluidContext {
    std::vector<const ArmModel*> models;    // one per type
    std::vector<IndexTable> tables;         // one per type
    std::vector<double> weights;            // type mass fractions, sum 1
    double alpha = 0.0;
    std::vector<FluidCell> ranked;          // all (type,state) cells, index descending
    std::vector<std::size_t> group_end;     // ranked[group_end[k-1]..group_end[k]) share one index value

    void build_ranking() {
        ranked.clear();
        group_end.clear();
        for (std::size_t t = 0; t < models.size(); ++t)
            for (int x = 0; x < models[t]->num_states; ++x)
                ranked.push_back({tables[t].at(x), static_cast<int>(t), x});
        std::stable_sort(ranked.begin(), ranked.end(),
                         [](const FluidCell& a, const FluidCell& b) { return a.value > b.value; });
        for (std::size_t i = 0; i < ranked.size();) {
            std::size_t j = i;
            while (j < ranked.size() && ranked[j].value == ranked[i].value) ++j;
            group_end.push_back(j);
            i = j;
        }
    }
};

inline FluidContext make_fluid_context(const BanditInstance& inst, std::vector<IndexTable> tables) {
    FluidContext ctx;
    const std::vector<int> counts = inst.type_counts();
    for (int t = 0; t < inst.num_types(); ++t) {
        ctx.models.push_back(&inst.models[static_cast<std::size_t>(t)]);
        ctx.weights.push_back(static_cast<double>(counts[static_cast<std::size_t>(t)]) / inst.num_arms());
    }
    ctx.tables = std::move(tables);
    ctx.alpha = inst.alpha();
    ctx.build_ranking();
    return ctx;
}

inline PopulationState fluid_uniform_start(const FluidContext& ctx) {
    PopulationState s;
    for (std::size_t t = 0; t < ctx.models.size(); ++t)
        s.nu.push_back(std::vector<double>(static_cast<std::size_t>(ctx.models[t]->num_states),
                                           ctx.weights[t] / ctx.models[t]->num_states));
    return s;
}

inline PopulationState fluid_corner_start(const FluidContext& ctx, bool last_state) {
    PopulationState s;
    for (std::size_t t = 0; t < ctx.models.size(); ++t) {
        std::vector<double> row(static_cast<std::size_t>(ctx.models[t]->num_states), 0.0);
        row[last_state ? row.size() - 1 : 0] = ctx.weights[t];
        s.nu.push_back(std::move(row));
    }
    return s;
}

struct FluidStepResult {
    PopulationState next;
    double activated_mass = 0.0;
    double step_reward = 0.0;  // instantaneous mixed reward of the split
};

// One step of the pooled-ranking flow: club states with equal index values
// (across types), activate groups in descending order until alpha is
// exhausted, splitting the boundary group proportionally, then propagate
// through each action's kernel.
inline FluidStepResult fluid_step(const PopulationState& state, const FluidContext& ctx) {
    FluidStepResult out;
    out.next.nu.resize(ctx.models.size());
    for (std::size_t t = 0; t < ctx.models.size(); ++t)
        out.next.nu[t].assign(static_cast<std::size_t>(ctx.models[t]->num_states), 0.0);

    auto propagate = [&](const FluidCell& cell, double kappa) {
        const double mass = state.nu[static_cast<std::size_t>(cell.t)][static_cast<std::size_t>(cell.x)];
        if (mass == 0.0) return;
        const ArmModel& m = *ctx.models[static_cast<std::size_t>(cell.t)];
        const double act = mass * kappa, pas = mass - act;
        out.activated_mass += act;
        out.step_reward += act * m.r(cell.x, 1) + pas * m.r(cell.x, 0);
        auto& dest = out.next.nu[static_cast<std::size_t>(cell.t)];
        if (act > 0.0) {
            const double* row = m.row(cell.x, 1);
            for (int y = 0; y < m.num_states; ++y)
                if (row[y] > 0.0) dest[static_cast<std::size_t>(y)] += act * row[y];
        }
        if (pas > 0.0) {
            const double* row = m.row(cell.x, 0);
            for (int y = 0; y < m.num_states; ++y)
                if (row[y] > 0.0) dest[static_cast<std::size_t>(y)] += pas * row[y];
        }
    };

    double need = ctx.alpha;
    std::size_t i = 0;
    for (std::size_t end : ctx.group_end) {
        double group_mass = 0.0;
        for (std::size_t k = i; k < end; ++k)
            group_mass += state.nu[static_cast<std::size_t>(ctx.ranked[k].t)][static_cast<std::size_t>(ctx.ranked[k].x)];
        double kappa = 0.0;
        if (need >= group_mass) {
            kappa = 1.0;
            need -= group_mass;
        } else if (need > 0.0 && group_mass > 0.0) {
            kappa = need / group_mass;
            need = 0.0;
        }
        for (std::size_t k = i; k < end; ++k) propagate(ctx.ranked[k], kappa);
        i = end;
    }
    return out;
}

enum class AttractorStatus { unique, multiple, no_convergence };

struct FluidIterRow {
    long iter = 0;
    double l1_change = 0.0;
    double activated_mass = 0.0;
};

struct FluidReport {
    AttractorStatus status = AttractorStatus::no_convergence;
    std::vector<PopulationState> limits;    // one per start
    std::vector<long> iterations;
    std::vector<std::vector<FluidIterRow>> traces;  // one per start
    PopulationState fixed_point;            // first limit when unique
    double fixed_point_reward = 0.0;        // per-arm fluid reward at the fixed point
};

inline FluidReport fluid_fixed_point(const FluidContext& ctx, double tol = 1e-10, long max_iter = 100000,
                                     std::vector<PopulationState> starts = {}, double match_tol = 1e-8) {
    if (starts.empty()) {
        starts.push_back(fluid_corner_start(ctx, false));
        starts.push_back(fluid_corner_start(ctx, true));
        starts.push_back(fluid_uniform_start(ctx));
    }
    if (starts.size() < 3) throw std::invalid_argument("fluid_fixed_point: need at least 3 starts");
    FluidReport rep;
    bool all_converged = true;
    for (PopulationState s : starts) {
        long it = 0;
        bool done = false;
        std::vector<FluidIterRow> trace;
        for (; it < max_iter; ++it) {
            FluidStepResult step = fluid_step(s, ctx);
            const double change = s.l1_distance(step.next);
            s = std::move(step.next);
            trace.push_back(FluidIterRow{it, change, step.activated_mass});
            if (change < tol) { done = true; break; }
        }
        rep.limits.push_back(s);
        rep.iterations.push_back(it + 1);
        rep.traces.push_back(std::move(trace));
        all_converged = all_converged && done;
    }
    if (!all_converged) {
        rep.status = AttractorStatus::no_convergence;
        return rep;
    }
    bool same = true;
    for (std::size_t k = 1; k < rep.limits.size(); ++k)
        same = same && rep.limits[0].l1_distance(rep.limits[k]) <= match_tol;
    rep.status = same ? AttractorStatus::unique : AttractorStatus::multiple;
    if (same) {
        rep.fixed_point = rep.limits[0];
        rep.fixed_point_reward = fluid_step(rep.fixed_point, ctx).step_reward;
    }
    return rep;
}

inline const char* attractor_name(AttractorStatus s) {
    switch (s) {
        case AttractorStatus::unique: return "UNIQUE";
        case AttractorStatus::multiple: return "MULTIPLE";
        default: return "NO_CONVERGENCE";
    }
}

struct GapRow {
    long n = 0;
    double per_arm_reward = 0.0;   // median across seeds
    double bound = 0.0;            // per-arm dual value at alpha_N
    double gap = 0.0;              // bound - reward
    double stderr_reward = 0.0;    // std error across seeds
};

struct TypeFraction {
    ArmModel arm;
    double fraction;  // of N, fractions sum to 1
};

// Per-arm LIP reward against the per-arm relaxed bound for growing N, with
// M_N = smallest integer exceeding alpha*N. Index tables are recomputed at
// each N's own dual optimum.
inline std::vector<GapRow> optimality_gap(const std::vector<TypeFraction>& mix, double alpha,
                                          const std::vector<long>& sizes, long horizon,
                                          const std::vector<std::uint64_t>& seeds, double solver_tol = 1e-9) {
    if (mix.empty() || sizes.empty() || seeds.empty())
        throw std::invalid_argument("optimality_gap: empty mix, sizes, or seeds");
    double frac = 0.0;
    for (const TypeFraction& t : mix) frac += t.fraction;
    if (std::fabs(frac - 1.0) > 1e-9) throw std::invalid_argument("optimality_gap: fractions must sum to 1");

    std::vector<GapRow> rows;
    for (long n : sizes) {
        // Largest-remainder apportionment of n arms to the mix.
        std::vector<int> counts(mix.size(), 0);
        std::vector<std::pair<double, std::size_t>> rema;
        long assigned = 0;
        for (std::size_t t = 0; t < mix.size(); ++t) {
            const double exact = mix[t].fraction * static_cast<double>(n);
            counts[t] = static_cast<int>(std::floor(exact));
            assigned += counts[t];
            rema.emplace_back(exact - std::floor(exact), t);
        }
        std::stable_sort(rema.begin(), rema.end(), [](auto& a, auto& b) { return a.first > b.first; });
        for (long k = 0; k < n - assigned; ++k) ++counts[rema[static_cast<std::size_t>(k) % rema.size()].second];

        const int m_n = static_cast<int>(std::floor(alpha * static_cast<double>(n))) + 1;  // smallest integer exceeding
        std::vector<std::pair<ArmModel, int>> types;
        for (std::size_t t = 0; t < mix.size(); ++t)
            if (counts[t] > 0) types.emplace_back(mix[t].arm, counts[t]);
        BanditInstance inst = BanditInstance::from_types(std::move(types), m_n);

        const DualSolution dual = optimal_lambda(inst, std::nullopt, 1e-7, solver_tol);
        std::vector<IndexTable> tables;
        for (const ArmModel& m : inst.models)
            tables.push_back(lagrangian_index_table(rvi_q(m, dual.lambda_star, solver_tol), m.label));

        std::vector<double> rewards;
        for (std::uint64_t seed : seeds) {
            const SimStats st = simulate(inst, SimPolicy::lip(tables), horizon, seed);
            rewards.push_back(st.average_reward / static_cast<double>(n));
        }
        std::vector<double> sorted(rewards);
        std::sort(sorted.begin(), sorted.end());
        const double median = sorted[sorted.size() / 2];
        double mean = 0.0;
        for (double r : rewards) mean += r;
        mean /= static_cast<double>(rewards.size());
        double var = 0.0;
        for (double r : rewards) var += (r - mean) * (r - mean);
        var = rewards.size() > 1 ? var / static_cast<double>(rewards.size() - 1) : 0.0;

        GapRow row;
        row.n = n;
        row.per_arm_reward = median;
        row.bound = dual.dual_value / static_cast<double>(n);
        row.gap = row.bound - median;
        row.stderr_reward = std::sqrt(var / static_cast<double>(rewards.size()));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rmab

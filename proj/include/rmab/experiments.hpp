#pragma once

// Preset experiment runner: canonical fixtures, per-seed CSV artifacts, a
// medians-across-seeds summary, and a manifest sufficient to re-run the
// experiment bit-identically.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rmab/core.hpp"
#include "rmab/csv.hpp"
#include "rmab/dqn.hpp"
#include "rmab/exact.hpp"
#include "rmab/fluid.hpp"
#include "rmab/json_io.hpp"
#include "rmab/models.hpp"
#include "rmab/restart.hpp"
#include "rmab/simulate.hpp"
#include "rmab/tabular.hpp"

namespace rmab {

inline constexpr const char* kVersion = "0.1.0";

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median_of: empty");
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

// ---- canonical fixtures ----

inline std::vector<RestartTypeState> restart_fig_types(int per_type = 25, int x_max = 500) {
    return {
        {RestartArmSpec{0.95, 0.9, x_max}, per_type},
        {RestartArmSpec{0.95, 0.2, x_max}, per_type},
        {RestartArmSpec{0.7, 0.95, x_max}, per_type},
        {RestartArmSpec{0.7, 0.2, x_max}, per_type},
    };
}

inline BanditInstance restart_fig_instance(int per_type = 25, int m = 16, int x_max = 500) {
    std::vector<std::pair<ArmModel, int>> types;
    for (const RestartTypeState& t : restart_fig_types(per_type, x_max))
        types.emplace_back(make_restart_arm(t.spec.p, t.spec.w, t.spec.x_max), t.count);
    return BanditInstance::from_types(std::move(types), m);
}

inline BanditInstance nonindexable_instance(int n = 10, int m = 3) {
    return BanditInstance::homogeneous(make_nonindexable_arm(), n, m);
}

inline BanditInstance deadline_homog_instance(int n = 5, int m = 2, double c = 0.8) {
    return BanditInstance::homogeneous(make_deadline_arm(c), n, m);
}

inline BanditInstance deadline_heter_instance(int per_group = 5, int m = 8,
                                              std::vector<double> costs = {0.1, 0.3, 0.6, 0.8}) {
    std::vector<std::pair<ArmModel, int>> types;
    for (double c : costs) types.emplace_back(make_deadline_arm(c), per_group);
    return BanditInstance::from_types(std::move(types), m);
}

inline IndexTable restart_whittle_table(const RestartArmSpec& spec, std::string label = {}) {
    IndexTable t;
    t.source = IndexSource::whittle;
    t.arm_label = std::move(label);
    t.values.resize(static_cast<std::size_t>(spec.x_max));
    for (int x = 1; x <= spec.x_max; ++x)
        t.values[static_cast<std::size_t>(x - 1)] = restart_whittle(spec, x);
    return t;
}

// ---- artifact plumbing ----

struct RunOptions {
    std::string outdir = "artifacts";
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    int threads = 1;
    long steps = 0;    // 0: preset default
    long horizon = 0;  // 0: preset default
};

struct PresetInfo {
    std::string name;
    std::string description;
    long default_steps = 0;
    long default_horizon = 0;
};

inline const std::vector<PresetInfo>& preset_catalog() {
    static const std::vector<PresetInfo> presets = {
        {"fig1-restart-subsidy",
         "online subsidy estimation plus a dual sweep on the 4-type restart fixture (N=100, M=16)",
         100000, 0},
        {"fig2-restart-lip-vs-wip", "LIP vs WIP simulation on the restart fixture", 0, 1000000},
        {"fig3-nonindexable-alg1",
         "relaxed-constraint tabular learner on the non-indexable fixture (N=10, M=3), then LIP vs WIP",
         200000, 500000},
        {"fig4-nonindexable-alg2",
         "hard-budget tabular learner on the non-indexable fixture (N=10, M=3), then LIP vs WIP",
         200000, 500000},
        {"fig5-deadline-homog",
         "approximate index learner on 5 homogeneous deadline arms (M=2, c=0.8) plus LIP/WIP simulation",
         8000, 1000000},
        {"fig6-deadline-heter",
         "approximate index learner on 20 deadline arms in 4 cost groups (M=8) plus LIP/WIP simulation",
         3000, 1000000},
        {"gap-curve", "per-arm reward vs the dual bound for N in {20,100,500} on the restart mix", 0,
         200000},
        {"fluid-check", "fluid fixed-point iteration from 3 starts on the restart mix", 0, 0},
    };
    return presets;
}

namespace detail {

template <typename Fn>
inline void for_each_seed(const std::vector<std::uint64_t>& seeds, int threads, Fn&& fn) {
    if (threads <= 1 || seeds.size() <= 1) {
        for (std::size_t i = 0; i < seeds.size(); ++i) fn(i, seeds[i]);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), seeds.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < seeds.size(); i = next++) fn(i, seeds[i]);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (std::thread& t : pool) t.join();
    for (std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

inline void write_manifest(const std::string& dir, const std::string& preset, const RunOptions& opt,
                           long steps, long horizon, Json params) {
    Json j;
    j["preset"] = preset;
    j["version"] = kVersion;
    j["convention"] = lambda_convention_name();
    j["seeds"] = opt.seeds;
    j["threads"] = opt.threads;
    j["steps"] = steps;
    j["horizon"] = horizon;
    j["parameters"] = std::move(params);
    save_json(j, dir + "/manifest.json");
}

inline void write_summary(const std::string& dir,
                          const std::vector<std::pair<std::string, double>>& rows) {
    std::vector<CsvRow> out;
    out.reserve(rows.size());
    for (const auto& [k, v] : rows) out.push_back({k, v});
    emit_csv(dir + "/summary.csv", {"metric", "value"}, out);
}

inline void write_sim_csv(const std::string& path, const SimStats& s) {
    std::vector<CsvRow> rows;
    rows.reserve(s.sampled_steps.size());
    for (std::size_t k = 0; k < s.sampled_steps.size(); ++k)
        rows.push_back({static_cast<long long>(s.sampled_steps[k]), s.moving_avg[k],
                        static_cast<long long>(s.budget_trace[k])});
    emit_csv(path, {"n", "moving_avg_reward", "budget"}, rows);
}

template <typename Result>
inline void write_learn_csv(const std::string& path, const Result& r) {
    std::vector<CsvRow> rows;
    rows.reserve(r.sampled_steps.size());
    for (std::size_t k = 0; k < r.sampled_steps.size(); ++k)
        rows.push_back({static_cast<long long>(r.sampled_steps[k]), r.lambda_trace[k],
                        r.avg_reward_trace[k], r.epsilon_trace[k]});
    emit_csv(path, {"n", "lambda", "avg_reward", "epsilon"}, rows);
}

inline void write_index_csv(const std::string& path, const std::vector<IndexTable>& tables) {
    std::vector<CsvRow> rows;
    for (std::size_t t = 0; t < tables.size(); ++t)
        for (int x = 0; x < tables[t].num_states(); ++x)
            rows.push_back({static_cast<long long>(t), static_cast<long long>(x), tables[t].at(x)});
    emit_csv(path, {"type", "x", "gamma"}, rows);
}

inline std::string seed_name(const std::string& stem, std::uint64_t seed) {
    return stem + "_seed" + std::to_string(seed) + ".csv";
}

// ---- preset bodies ----

inline void run_fig1(const std::string& dir, const RunOptions& opt, long steps) {
    const std::vector<RestartTypeState> types = restart_fig_types();
    const double alpha = 0.16;
    const double epsilon = 0.02;
    const DualSolution exact = restart_lambda_star(types, alpha);
    std::vector<double> finals(opt.seeds.size());
    const StepSchedules sched = builtin_schedules();
    for_each_seed(opt.seeds, opt.threads, [&](std::size_t i, std::uint64_t seed) {
        OnlineRestartTrace tr =
            online_restart_learner(types, 16, steps, sched.beta, epsilon, seed, 50);
        std::vector<CsvRow> rows;
        rows.reserve(tr.sampled_steps.size());
        for (std::size_t k = 0; k < tr.sampled_steps.size(); ++k)
            rows.push_back({static_cast<long long>(tr.sampled_steps[k]), tr.lambda_trace[k],
                            tr.avg_reward_trace[k], epsilon});
        emit_csv(dir + "/" + seed_name("trace", seed), {"n", "lambda", "avg_reward", "epsilon"},
                 rows);
        finals[i] = tr.final_lambda;
    });
    long total = 0;
    for (const RestartTypeState& t : types) total += t.count;
    std::vector<CsvRow> sweep;
    for (int k = 0; k <= 200; ++k) {
        const double lam = -20.0 + 0.1 * k;
        double val = -lam * alpha * static_cast<double>(total);
        for (const RestartTypeState& t : types)
            val += t.count * optimal_gain(t.spec.p, t.spec.w, lam).gain;
        sweep.push_back({lam, val});
    }
    emit_csv(dir + "/dual_sweep.csv", {"lambda", "lagrangian"}, sweep);
    write_summary(dir, {{"lambda_star_exact", exact.lambda_star},
                        {"lambda_star_learned", median_of(finals)},
                        {"activation_fraction", exact.activation_fraction}});
}

inline void run_fig2(const std::string& dir, const RunOptions& opt, long horizon) {
    const std::vector<RestartTypeState> types = restart_fig_types();
    BanditInstance inst = restart_fig_instance();
    const DualSolution sol = restart_lambda_star(types, inst.alpha());
    std::vector<IndexTable> lip, wip;
    for (std::size_t t = 0; t < types.size(); ++t) {
        lip.push_back(restart_index_table(types[t].spec, sol.lambda_star, inst.models[t].label));
        wip.push_back(restart_whittle_table(types[t].spec, inst.models[t].label));
    }
    std::vector<double> lips(opt.seeds.size()), wips(opt.seeds.size());
    for_each_seed(opt.seeds, opt.threads, [&](std::size_t i, std::uint64_t seed) {
        SimStats a = simulate(inst, SimPolicy::lip(lip), horizon, seed);
        SimStats b = simulate(inst, SimPolicy::wip(wip), horizon, seed);
        write_sim_csv(dir + "/" + seed_name("lip", seed), a);
        write_sim_csv(dir + "/" + seed_name("wip", seed), b);
        lips[i] = a.average_reward;
        wips[i] = b.average_reward;
    });
    const double lm = median_of(lips), wm = median_of(wips);
    write_summary(dir, {{"lambda_star", sol.lambda_star},
                        {"lip_reward", lm},
                        {"wip_reward", wm},
                        {"rel_diff", std::fabs(lm - wm) / std::max(1e-12, std::fabs(wm))}});
}

inline void run_fig34(const std::string& dir, const RunOptions& opt, long steps, long horizon,
                      bool hard_budget) {
    BanditInstance inst = nonindexable_instance();
    const DualSolution exact = optimal_lambda(inst);
    const ArmModel& arm = inst.models[0];
    IndexTable wip;
    wip.source = IndexSource::whittle;
    wip.arm_label = arm.label;
    wip.values.resize(static_cast<std::size_t>(arm.num_states));
    for (int x = 0; x < arm.num_states; ++x)
        wip.values[static_cast<std::size_t>(x)] = whittle_index(arm, x, {-2.0, 2.0}).value;
    const StepSchedules sched = builtin_schedules();
    const EpsPolicy eps;
    std::vector<double> finals(opt.seeds.size()), lips(opt.seeds.size()), wips(opt.seeds.size());
    std::vector<double> violations(opt.seeds.size(), 0.0);
    for_each_seed(opt.seeds, opt.threads, [&](std::size_t i, std::uint64_t seed) {
        LearnResult lr = hard_budget ? run_alg2(inst, sched, eps, steps, seed)
                                     : run_alg1(inst, sched, eps, steps, seed);
        write_learn_csv(dir + "/" + seed_name("trace", seed), lr);
        std::vector<IndexTable> tables = lr.index_tables(inst);
        write_index_csv(dir + "/" + seed_name("index", seed), tables);
        SimStats a = simulate(inst, SimPolicy::lip(tables), horizon, seed);
        SimStats b = simulate(inst, SimPolicy::wip({wip}), horizon, seed);
        write_sim_csv(dir + "/" + seed_name("lip", seed), a);
        write_sim_csv(dir + "/" + seed_name("wip", seed), b);
        finals[i] = lr.state.lambda;
        lips[i] = a.average_reward;
        wips[i] = b.average_reward;
        violations[i] = static_cast<double>(lr.budget_violations);
    });
    const double lm = median_of(lips), wm = median_of(wips);
    std::vector<std::pair<std::string, double>> summary = {
        {"lambda_exact", exact.lambda_star},
        {"lambda_learned", median_of(finals)},
        {"lip_reward", lm},
        {"wip_reward", wm},
        {"lip_minus_wip", lm - wm}};
    if (hard_budget) summary.emplace_back("budget_violations", median_of(violations));
    write_summary(dir, summary);
}

inline void run_fig56(const std::string& dir, const RunOptions& opt, long steps, long horizon,
                      bool heterogeneous) {
    BanditInstance inst = heterogeneous ? deadline_heter_instance() : deadline_homog_instance();
    const DualSolution exact = optimal_lambda(inst);
    std::vector<IndexTable> lip, wip;
    const std::vector<double> costs =
        heterogeneous ? std::vector<double>{0.1, 0.3, 0.6, 0.8} : std::vector<double>{0.8};
    for (std::size_t t = 0; t < inst.models.size(); ++t) {
        QTable q = rvi_q(inst.models[t], exact.lambda_star);
        lip.push_back(lagrangian_index_table(q, inst.models[t].label));
        wip.push_back(deadline_whittle_table(costs[t], inst.models[t].label));
    }
    const TrainConfig cfg;
    std::vector<double> finals(opt.seeds.size()), lips(opt.seeds.size()), wips(opt.seeds.size());
    for_each_seed(opt.seeds, opt.threads, [&](std::size_t i, std::uint64_t seed) {
        DqnResult dr = run_dqn(inst, cfg, steps, seed);
        write_learn_csv(dir + "/" + seed_name("trace", seed), dr);
        write_index_csv(dir + "/" + seed_name("index", seed), dr.index_tables);
        std::vector<CsvRow> loss_rows;
        loss_rows.reserve(dr.losses.size());
        for (std::size_t k = 0; k < dr.losses.size(); ++k)
            loss_rows.push_back(
                {static_cast<long long>(k), static_cast<double>(dr.losses[k])});
        emit_csv(dir + "/" + seed_name("loss", seed), {"n", "loss"}, loss_rows);
        SimStats a = simulate(inst, SimPolicy::lip(lip), horizon, seed);
        SimStats b = simulate(inst, SimPolicy::wip(wip), horizon, seed);
        write_sim_csv(dir + "/" + seed_name("lip", seed), a);
        write_sim_csv(dir + "/" + seed_name("wip", seed), b);
        finals[i] = dr.final_lambda;
        lips[i] = a.average_reward;
        wips[i] = b.average_reward;
    });
    const double lm = median_of(lips), wm = median_of(wips);
    write_summary(dir, {{"lambda_exact", exact.lambda_star},
                        {"lambda_learned", median_of(finals)},
                        {"lip_reward", lm},
                        {"wip_reward", wm},
                        {"rel_diff", std::fabs(lm - wm) / std::max(1e-12, std::fabs(wm))}});
}

inline void run_gap_curve(const std::string& dir, const RunOptions& opt, long horizon) {
    std::vector<TypeFraction> mix;
    for (const RestartTypeState& t : restart_fig_types())
        mix.push_back({make_restart_arm(t.spec.p, t.spec.w, t.spec.x_max), 0.25});
    const std::vector<long> sizes = {20, 100, 500};
    std::vector<GapRow> rows = optimality_gap(mix, 0.16, sizes, horizon, opt.seeds);
    std::vector<CsvRow> out;
    for (const GapRow& r : rows)
        out.push_back({static_cast<long long>(r.n), r.per_arm_reward, r.bound, r.gap,
                       r.stderr_reward});
    emit_csv(dir + "/gap.csv", {"N", "per_arm_reward", "bound", "gap", "stderr"}, out);
    std::vector<std::pair<std::string, double>> summary;
    for (const GapRow& r : rows) {
        summary.emplace_back("gap_" + std::to_string(r.n), r.gap);
        summary.emplace_back("stderr_" + std::to_string(r.n), r.stderr_reward);
    }
    write_summary(dir, summary);
}

inline void run_fluid_check(const std::string& dir, const RunOptions&) {
    const std::vector<RestartTypeState> types = restart_fig_types();
    BanditInstance inst = restart_fig_instance();
    const DualSolution sol = restart_lambda_star(types, inst.alpha());
    std::vector<IndexTable> tables;
    for (std::size_t t = 0; t < types.size(); ++t)
        tables.push_back(restart_index_table(types[t].spec, sol.lambda_star, inst.models[t].label));
    FluidContext ctx = make_fluid_context(inst, std::move(tables));
    FluidReport rep = fluid_fixed_point(ctx);
    for (std::size_t s = 0; s < rep.traces.size(); ++s) {
        std::vector<CsvRow> rows;
        rows.reserve(rep.traces[s].size());
        for (const FluidIterRow& r : rep.traces[s])
            rows.push_back({static_cast<long long>(r.iter), r.l1_change, r.activated_mass});
        emit_csv(dir + "/fluid_start" + std::to_string(s) + ".csv",
                 {"iter", "l1_change", "activated_mass"}, rows);
    }
    double activated = 0.0;
    if (rep.status == AttractorStatus::unique)
        activated = fluid_step(rep.fixed_point, ctx).activated_mass;
    long iters = 0;
    for (long i : rep.iterations) iters = std::max(iters, i);
    write_summary(dir, {{"unique", rep.status == AttractorStatus::unique ? 1.0 : 0.0},
                        {"iterations_max", static_cast<double>(iters)},
                        {"fixed_point_reward", rep.fixed_point_reward},
                        {"activated_mass", activated},
                        {"lambda_star", sol.lambda_star}});
}

}  // namespace detail

inline std::string run_experiment(const std::string& name, const RunOptions& opt) {
    const PresetInfo* preset = nullptr;
    for (const PresetInfo& p : preset_catalog())
        if (p.name == name) preset = &p;
    if (!preset) throw ConfigError("unknown preset: " + name);
    if (opt.seeds.empty()) throw ConfigError("experiment: seeds must be nonempty");
    if (opt.threads < 1) throw ConfigError("experiment: threads must be >= 1");
    if (opt.steps < 0 || opt.horizon < 0) throw ConfigError("experiment: negative steps/horizon");
    const long steps = opt.steps > 0 ? opt.steps : preset->default_steps;
    const long horizon = opt.horizon > 0 ? opt.horizon : preset->default_horizon;

    const std::string dir = opt.outdir + "/" + name;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);

    Json params;
    params["description"] = preset->description;
    detail::write_manifest(dir, name, opt, steps, horizon, std::move(params));

    if (name == "fig1-restart-subsidy") detail::run_fig1(dir, opt, steps);
    else if (name == "fig2-restart-lip-vs-wip") detail::run_fig2(dir, opt, horizon);
    else if (name == "fig3-nonindexable-alg1") detail::run_fig34(dir, opt, steps, horizon, false);
    else if (name == "fig4-nonindexable-alg2") detail::run_fig34(dir, opt, steps, horizon, true);
    else if (name == "fig5-deadline-homog") detail::run_fig56(dir, opt, steps, horizon, false);
    else if (name == "fig6-deadline-heter") detail::run_fig56(dir, opt, steps, horizon, true);
    else if (name == "gap-curve") detail::run_gap_curve(dir, opt, horizon);
    else detail::run_fluid_check(dir, opt);
    return dir;
}

inline std::string run_experiment_config(const Json& j) {
    require_object_keys(j, {"preset"}, {"outdir", "seeds", "steps", "horizon", "threads"},
                        "experiment");
    RunOptions opt;
    if (j.contains("outdir")) opt.outdir = j.at("outdir").get<std::string>();
    if (j.contains("seeds")) opt.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("steps")) opt.steps = j.at("steps").get<long>();
    if (j.contains("horizon")) opt.horizon = j.at("horizon").get<long>();
    if (j.contains("threads")) opt.threads = j.at("threads").get<int>();
    return run_experiment(j.at("preset").get<std::string>(), opt);
}

}  // namespace rmab

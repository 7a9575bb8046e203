// Command-line front end for the restless-bandit index-policy laboratory.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmab/experiments.hpp"

namespace {

using namespace rmab;

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + dir);
}

BanditInstance resolve_instance(const Json& j, const std::string& where) {
    if (j.is_string()) return load_instance(j.get<std::string>());
    return instance_from_json(j, where);
}

ArmModel resolve_arm(const Json& j, const std::string& where) {
    if (j.is_string()) return load_arm(j.get<std::string>());
    return arm_from_json(j, where);
}

Json qtable_to_json(const QTable& q) {
    Json j;
    j["lambda"] = q.lambda;
    j["gain"] = q.gain;
    j["residual"] = q.residual;
    j["iterations"] = q.iterations;
    j["q0"] = q.q0;
    j["q1"] = q.q1;
    return j;
}

Json dual_to_json(const DualSolution& sol) {
    Json j;
    j["lambda_star"] = sol.lambda_star;
    j["dual_value"] = sol.dual_value;
    j["activation_fraction"] = sol.activation_fraction;
    j["boundary"] = sol.boundary;
    if (sol.randomization) {
        j["randomization"] = {{"type", sol.randomization->type_index},
                              {"state", sol.randomization->state},
                              {"probability", sol.randomization->probability}};
    }
    return j;
}

void write_solve_outputs(const std::string& dir, const QTable& q, const std::string& label) {
    IndexTable idx = lagrangian_index_table(q, label);
    std::vector<CsvRow> rows;
    for (std::size_t x = 0; x < q.q0.size(); ++x)
        rows.push_back({static_cast<long long>(x), q.q0[x], q.q1[x], idx.at(static_cast<int>(x))});
    emit_csv(dir + "/solve.csv", {"state", "q0", "q1", "gamma"}, rows);
}

void cmd_solve(const std::string& arm_path, bool dual, double lambda, double alpha, double tol,
               const std::string& out) {
    ensure_dir(out);
    ArmModel arm = load_arm(arm_path);
    Json j;
    if (dual) {
        DualSolution sol = optimal_lambda(std::vector<ArmModel>{arm}, alpha, std::nullopt, 1e-9, tol);
        j["dual"] = dual_to_json(sol);
        lambda = sol.lambda_star;
    }
    QTable q = rvi_q(arm, lambda, tol);
    j["qtable"] = qtable_to_json(q);
    j["convention"] = lambda_convention_name();
    save_json(j, out + "/solve.json");
    write_solve_outputs(out, q, arm.label);
    std::cout << "lambda " << format_double(lambda) << " gain " << format_double(q.gain) << "\n";
    std::cout << "wrote " << out << "/solve.json, " << out << "/solve.csv\n";
}

void cmd_whittle(const std::string& arm_path, double lo, double hi, double tol, bool indexability,
                 double step, const std::string& out) {
    ensure_dir(out);
    ArmModel arm = load_arm(arm_path);
    std::vector<CsvRow> rows;
    for (int x = 0; x < arm.num_states; ++x) {
        WhittleResult w = whittle_index(arm, x, {lo, hi}, tol);
        rows.push_back({static_cast<long long>(x), w.value,
                        static_cast<long long>(w.multiple_roots ? 1 : 0)});
    }
    emit_csv(out + "/whittle.csv", {"state", "whittle", "multiple_roots"}, rows);
    std::cout << "wrote " << out << "/whittle.csv\n";
    if (indexability) {
        std::vector<double> grid;
        for (double lam = lo; lam <= hi + 1e-12; lam += step) grid.push_back(lam);
        IndexabilityReport rep = indexability_check(arm, grid);
        std::cout << (rep.indexable ? "INDEXABLE" : "NON_INDEXABLE") << "\n";
        Json j;
        j["indexable"] = rep.indexable;
        j["grid_lo"] = lo;
        j["grid_hi"] = hi;
        j["grid_step"] = step;
        if (rep.violation) {
            j["violation_lambda_low"] = rep.violation->first;
            j["violation_lambda_high"] = rep.violation->second;
        }
        save_json(j, out + "/indexability.json");
    }
}

void cmd_restart_index(const std::string& config_path, const std::string& out) {
    ensure_dir(out);
    Json cfg = load_json(config_path);
    require_object_keys(cfg, {"types", "alpha"}, {"x_max"}, "restart-index");
    const int x_max = cfg.value("x_max", 500);
    std::vector<RestartTypeState> types;
    for (const Json& t : cfg.at("types")) {
        require_object_keys(t, {"p", "w"}, {"count"}, "restart-index.types");
        RestartTypeState ts;
        ts.spec.p = t.at("p").get<double>();
        ts.spec.w = t.at("w").get<double>();
        ts.spec.x_max = x_max;
        ts.count = t.value("count", 1);
        ts.spec.check();
        types.push_back(ts);
    }
    const double alpha = cfg.at("alpha").get<double>();
    DualSolution sol = restart_lambda_star(types, alpha);
    Json j = dual_to_json(sol);
    Json thresholds = Json::array();
    std::vector<IndexTable> tables;
    for (const RestartTypeState& t : types) {
        RestartSolution rs = optimal_gain(t.spec.p, t.spec.w, sol.lambda_star);
        thresholds.push_back({{"p", t.spec.p},
                              {"w", t.spec.w},
                              {"count", t.count},
                              {"threshold", rs.threshold},
                              {"gain", rs.gain}});
        tables.push_back(restart_index_table(t.spec, sol.lambda_star));
    }
    j["thresholds"] = thresholds;
    j["convention"] = lambda_convention_name();
    save_json(j, out + "/restart.json");
    std::vector<CsvRow> rows;
    for (std::size_t t = 0; t < tables.size(); ++t)
        for (int x = 1; x <= tables[t].num_states(); ++x)
            rows.push_back({static_cast<long long>(t), static_cast<long long>(x),
                            tables[t].at(x - 1)});
    emit_csv(out + "/index.csv", {"type", "x", "gamma"}, rows);
    std::cout << "lambda_star " << format_double(sol.lambda_star) << "\n";
    std::cout << "wrote " << out << "/restart.json, " << out << "/index.csv\n";
}

void cmd_learn_tabular(const std::string& config_path, std::uint64_t seed, const std::string& out) {
    ensure_dir(out);
    Json cfg = load_json(config_path);
    require_object_keys(cfg, {"instance", "algorithm", "steps"}, {"trace_stride", "seed"},
                        "learn-tabular");
    BanditInstance inst = resolve_instance(cfg.at("instance"), "learn-tabular.instance");
    const int algorithm = cfg.at("algorithm").get<int>();
    if (algorithm != 1 && algorithm != 2)
        throw ConfigError("learn-tabular: algorithm must be 1 or 2");
    const long steps = cfg.at("steps").get<long>();
    const int stride = cfg.value("trace_stride", 100);
    if (cfg.contains("seed")) seed = cfg.at("seed").get<std::uint64_t>();
    const StepSchedules sched = builtin_schedules();
    const EpsPolicy eps;
    LearnResult lr = algorithm == 1 ? run_alg1(inst, sched, eps, steps, seed, stride)
                                    : run_alg2(inst, sched, eps, steps, seed, stride);
    detail::write_learn_csv(out + "/trace.csv", lr);
    detail::write_index_csv(out + "/index.csv", lr.index_tables(inst));
    std::cout << "final lambda " << format_double(lr.state.lambda) << " avg reward "
              << format_double(lr.average_reward) << "\n";
    std::cout << "wrote " << out << "/trace.csv, " << out << "/index.csv\n";
}

void cmd_learn_dqn(const std::string& config_path, std::uint64_t seed, const std::string& out) {
    ensure_dir(out);
    Json cfg = load_json(config_path);
    require_object_keys(cfg, {"instance", "steps"},
                        {"batch_size", "learning_rate", "eps_initial", "eps_decay", "eps_floor",
                         "sync_period", "buffer_capacity", "hidden", "trace_stride", "seed"},
                        "learn-dqn");
    BanditInstance inst = resolve_instance(cfg.at("instance"), "learn-dqn.instance");
    TrainConfig tc;
    tc.batch_size = cfg.value("batch_size", tc.batch_size);
    tc.learning_rate = cfg.value("learning_rate", tc.learning_rate);
    tc.eps_initial = cfg.value("eps_initial", tc.eps_initial);
    tc.eps_decay = cfg.value("eps_decay", tc.eps_decay);
    tc.eps_floor = cfg.value("eps_floor", tc.eps_floor);
    tc.sync_period = cfg.value("sync_period", tc.sync_period);
    tc.buffer_capacity = cfg.value("buffer_capacity", tc.buffer_capacity);
    if (cfg.contains("hidden")) tc.hidden = cfg.at("hidden").get<std::vector<int>>();
    tc.trace_stride = cfg.value("trace_stride", tc.trace_stride);
    if (cfg.contains("seed")) seed = cfg.at("seed").get<std::uint64_t>();
    const long steps = cfg.at("steps").get<long>();
    DqnResult dr = run_dqn(inst, tc, steps, seed);
    detail::write_learn_csv(out + "/trace.csv", dr);
    detail::write_index_csv(out + "/index.csv", dr.index_tables);
    std::vector<CsvRow> loss_rows;
    for (std::size_t k = 0; k < dr.losses.size(); ++k)
        loss_rows.push_back({static_cast<long long>(k), static_cast<double>(dr.losses[k])});
    emit_csv(out + "/loss.csv", {"n", "loss"}, loss_rows);
    std::cout << "final lambda " << format_double(dr.final_lambda) << "\n";
    std::cout << "wrote " << out << "/trace.csv, " << out << "/index.csv, " << out << "/loss.csv\n";
}

std::vector<IndexTable> exact_lip_tables(const BanditInstance& inst, double solver_tol) {
    DualSolution sol = optimal_lambda(inst);
    std::vector<IndexTable> tables;
    for (const ArmModel& m : inst.models)
        tables.push_back(lagrangian_index_table(rvi_q(m, sol.lambda_star, solver_tol), m.label));
    return tables;
}

void cmd_simulate(const std::string& instance_path, const std::string& policy_name, long horizon,
                  double wlo, double whi, std::uint64_t seed, const std::string& out) {
    ensure_dir(out);
    BanditInstance inst = load_instance(instance_path);
    SimPolicy policy = SimPolicy::random();
    if (policy_name == "lip") {
        policy = SimPolicy::lip(exact_lip_tables(inst, 1e-10));
    } else if (policy_name == "wip") {
        std::vector<IndexTable> tables;
        for (const ArmModel& m : inst.models) {
            IndexTable t;
            t.source = IndexSource::whittle;
            t.arm_label = m.label;
            t.values.resize(static_cast<std::size_t>(m.num_states));
            for (int x = 0; x < m.num_states; ++x)
                t.values[static_cast<std::size_t>(x)] = whittle_index(m, x, {wlo, whi}).value;
            tables.push_back(std::move(t));
        }
        policy = SimPolicy::wip(std::move(tables));
    } else if (policy_name != "random") {
        throw ConfigError("simulate: policy must be lip, wip, or random");
    }
    SimStats stats = simulate(inst, policy, horizon, seed);
    detail::write_sim_csv(out + "/stats.csv", stats);
    Json j;
    j["policy"] = policy_name;
    j["average_reward"] = stats.average_reward;
    j["budget_violations"] = stats.budget_violations;
    j["horizon"] = stats.horizon;
    j["seed"] = seed;
    save_json(j, out + "/simulate.json");
    std::cout << "average reward " << format_double(stats.average_reward) << " violations "
              << stats.budget_violations << "\n";
    std::cout << "wrote " << out << "/stats.csv, " << out << "/simulate.json\n";
}

void cmd_fluid(const std::string& instance_path, const std::string& out) {
    ensure_dir(out);
    BanditInstance inst = load_instance(instance_path);
    FluidContext ctx = make_fluid_context(inst, exact_lip_tables(inst, 1e-10));
    FluidReport rep = fluid_fixed_point(ctx);
    for (std::size_t s = 0; s < rep.traces.size(); ++s) {
        std::vector<CsvRow> rows;
        for (const FluidIterRow& r : rep.traces[s])
            rows.push_back({static_cast<long long>(r.iter), r.l1_change, r.activated_mass});
        emit_csv(out + "/fluid_start" + std::to_string(s) + ".csv",
                 {"iter", "l1_change", "activated_mass"}, rows);
    }
    Json j;
    j["status"] = attractor_name(rep.status);
    j["iterations"] = rep.iterations;
    j["fixed_point_reward"] = rep.fixed_point_reward;
    save_json(j, out + "/fluid.json");
    std::cout << attractor_name(rep.status) << "\n";
    if (rep.status == AttractorStatus::no_convergence)
        throw ConvergenceError("fluid iteration did not converge", 0.0);
}

void cmd_gap(const std::string& config_path, const std::string& out) {
    ensure_dir(out);
    Json cfg = load_json(config_path);
    require_object_keys(cfg, {"mix", "alpha", "sizes", "horizon", "seeds"}, {}, "gap");
    std::vector<TypeFraction> mix;
    for (const Json& entry : cfg.at("mix")) {
        require_object_keys(entry, {"arm", "fraction"}, {}, "gap.mix");
        mix.push_back({resolve_arm(entry.at("arm"), "gap.mix.arm"),
                       entry.at("fraction").get<double>()});
    }
    std::vector<GapRow> rows =
        optimality_gap(mix, cfg.at("alpha").get<double>(), cfg.at("sizes").get<std::vector<long>>(),
                       cfg.at("horizon").get<long>(),
                       cfg.at("seeds").get<std::vector<std::uint64_t>>());
    std::vector<CsvRow> out_rows;
    for (const GapRow& r : rows)
        out_rows.push_back({static_cast<long long>(r.n), r.per_arm_reward, r.bound, r.gap,
                            r.stderr_reward});
    emit_csv(out + "/gap.csv", {"N", "per_arm_reward", "bound", "gap", "stderr"}, out_rows);
    std::cout << "wrote " << out << "/gap.csv\n";
}

void cmd_make_env(const std::string& model, double p, double w, int x_max, double c,
                  const std::string& out_file) {
    ArmModel arm;
    if (model == "restart") {
        arm = make_restart_arm(p, w, x_max);
    } else if (model == "nonindexable") {
        arm = make_nonindexable_arm();
    } else if (model == "deadline") {
        arm = make_deadline_arm(c);
    } else {
        throw ConfigError("make-env: model must be restart, nonindexable, or deadline");
    }
    save_arm(arm, out_file);
    std::cout << "wrote " << out_file << " (" << arm.num_states << " states)\n";
}

void cmd_run(const std::string& preset, const std::string& config_path, RunOptions opt) {
    std::string dir;
    if (!config_path.empty()) {
        Json cfg = load_json(config_path);
        dir = run_experiment_config(cfg);
    } else {
        if (preset.empty()) throw ConfigError("run: need a preset name or --config");
        dir = run_experiment(preset, opt);
    }
    std::cout << "wrote " << dir << "\n";
}

void cmd_list_presets() {
    for (const PresetInfo& p : preset_catalog()) {
        std::cout << p.name << "\n  " << p.description << "\n  defaults:";
        if (p.default_steps > 0) std::cout << " steps=" << p.default_steps;
        if (p.default_horizon > 0) std::cout << " horizon=" << p.default_horizon;
        if (p.default_steps == 0 && p.default_horizon == 0) std::cout << " none";
        std::cout << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"restless-bandit index-policy laboratory"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string out = "out";
    std::uint64_t seed = 1;
    int threads = 1;
    std::string config_path;
    app.add_option("--out", out, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "rng seed")->capture_default_str();
    app.add_option("--threads", threads, "worker threads for multi-seed runs")
        ->capture_default_str();
    app.add_option("--config", config_path, "config file (JSON)");

    // solve
    auto* solve = app.add_subcommand("solve", "exact per-arm solve at a fixed or optimal lambda");
    std::string solve_arm;
    double solve_lambda = 0.0, solve_alpha = 0.5, solve_tol = 1e-10;
    bool solve_dual = false;
    solve->add_option("--arm", solve_arm, "arm JSON file")->required();
    solve->add_option("--lambda", solve_lambda, "subsidy value");
    solve->add_flag("--dual", solve_dual, "optimize lambda for --alpha instead");
    solve->add_option("--alpha", solve_alpha, "activation fraction for --dual");
    solve->add_option("--tol", solve_tol, "solver tolerance");
    solve->callback([&] { cmd_solve(solve_arm, solve_dual, solve_lambda, solve_alpha, solve_tol, out); });

    // whittle
    auto* whittle = app.add_subcommand("whittle", "numeric Whittle indices and indexability check");
    std::string whittle_arm;
    double whittle_lo = -2.0, whittle_hi = 2.0, whittle_tol = 1e-6, whittle_step = 0.01;
    bool whittle_indexability = false;
    whittle->add_option("--arm", whittle_arm, "arm JSON file")->required();
    whittle->add_option("--lo", whittle_lo, "bracket low")->capture_default_str();
    whittle->add_option("--hi", whittle_hi, "bracket high")->capture_default_str();
    whittle->add_option("--tol", whittle_tol, "root tolerance")->capture_default_str();
    whittle->add_flag("--indexability", whittle_indexability, "also run the passive-set nesting check");
    whittle->add_option("--step", whittle_step, "lambda grid step for --indexability")
        ->capture_default_str();
    whittle->callback([&] {
        cmd_whittle(whittle_arm, whittle_lo, whittle_hi, whittle_tol, whittle_indexability,
                    whittle_step, out);
    });

    // restart-index
    auto* restart = app.add_subcommand("restart-index", "closed-form restart solution and indices");
    restart->callback([&] {
        if (config_path.empty()) throw ConfigError("restart-index: --config is required");
        cmd_restart_index(config_path, out);
    });

    // learn-tabular
    auto* ltab = app.add_subcommand("learn-tabular", "two-timescale tabular index learner");
    ltab->callback([&] {
        if (config_path.empty()) throw ConfigError("learn-tabular: --config is required");
        cmd_learn_tabular(config_path, seed, out);
    });

    // learn-dqn
    auto* ldqn = app.add_subcommand("learn-dqn", "approximate index learner with replay and target net");
    ldqn->callback([&] {
        if (config_path.empty()) throw ConfigError("learn-dqn: --config is required");
        cmd_learn_dqn(config_path, seed, out);
    });

    // simulate
    auto* sim = app.add_subcommand("simulate", "top-M policy simulation");
    std::string sim_instance, sim_policy = "lip";
    long sim_horizon = 100000;
    double sim_wlo = -2.0, sim_whi = 2.0;
    sim->add_option("--instance", sim_instance, "instance JSON file")->required();
    sim->add_option("--policy", sim_policy, "lip | wip | random")->capture_default_str();
    sim->add_option("--horizon", sim_horizon, "steps")->capture_default_str();
    sim->add_option("--wlo", sim_wlo, "whittle bracket low (wip)")->capture_default_str();
    sim->add_option("--whi", sim_whi, "whittle bracket high (wip)")->capture_default_str();
    sim->callback([&] { cmd_simulate(sim_instance, sim_policy, sim_horizon, sim_wlo, sim_whi, seed, out); });

    // fluid
    auto* fluid = app.add_subcommand("fluid", "population fixed-point iteration");
    std::string fluid_instance;
    fluid->add_option("--instance", fluid_instance, "instance JSON file")->required();
    fluid->callback([&] { cmd_fluid(fluid_instance, out); });

    // gap
    auto* gap = app.add_subcommand("gap", "per-arm reward vs dual bound for growing N");
    gap->callback([&] {
        if (config_path.empty()) throw ConfigError("gap: --config is required");
        cmd_gap(config_path, out);
    });

    // run
    auto* run = app.add_subcommand("run", "run a named experiment preset");
    std::string run_preset;
    std::vector<std::uint64_t> run_seeds;
    long run_steps = 0, run_horizon = 0;
    run->add_option("preset", run_preset, "preset name (see list-presets)");
    run->add_option("--seeds", run_seeds, "seed list");
    run->add_option("--steps", run_steps, "override preset steps");
    run->add_option("--horizon", run_horizon, "override preset horizon");
    run->callback([&] {
        RunOptions opt;
        opt.outdir = out;
        if (!run_seeds.empty()) opt.seeds = run_seeds;
        opt.threads = threads;
        opt.steps = run_steps;
        opt.horizon = run_horizon;
        cmd_run(run_preset, config_path, opt);
    });

    // list-presets
    auto* lp = app.add_subcommand("list-presets", "show the preset catalog");
    lp->callback([&] { cmd_list_presets(); });

    // make-env
    auto* mk = app.add_subcommand("make-env", "emit a builder arm as standard arm JSON");
    std::string mk_model = "restart", mk_out = "arm.json";
    double mk_p = 0.5, mk_w = 1.0, mk_c = 0.8;
    int mk_xmax = 500;
    mk->add_option("--model", mk_model, "restart | nonindexable | deadline")->capture_default_str();
    mk->add_option("--p", mk_p, "restart success probability")->capture_default_str();
    mk->add_option("--w", mk_w, "restart importance weight")->capture_default_str();
    mk->add_option("--x-max", mk_xmax, "restart truncation")->capture_default_str();
    mk->add_option("--c", mk_c, "deadline activation cost")->capture_default_str();
    mk->add_option("--file", mk_out, "output file")->capture_default_str();
    mk->callback([&] { cmd_make_env(mk_model, mk_p, mk_w, mk_xmax, mk_c, mk_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const rmab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const rmab::ConvergenceError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return 3;
    } catch (const rmab::BracketError& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return 3;
    } catch (const rmab::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

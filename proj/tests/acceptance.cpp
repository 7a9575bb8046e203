// Acceptance gate: one line per criterion, PASS/FAIL with pinned tolerances.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "rmab/csv.hpp"
#include "rmab/dqn.hpp"
#include "rmab/exact.hpp"
#include "rmab/experiments.hpp"
#include "rmab/fluid.hpp"
#include "rmab/json_io.hpp"
#include "rmab/models.hpp"
#include "rmab/restart.hpp"
#include "rmab/simulate.hpp"
#include "rmab/tabular.hpp"

#ifndef RMAB_TEST_DATA_DIR
#define RMAB_TEST_DATA_DIR "tests/data"
#endif

namespace {

using namespace rmab;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double secs() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("C%-3d %-30s %s  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

void criterion(int id, const std::string& name,
               const std::function<std::pair<bool, std::string>()>& fn) {
    try {
        auto [pass, detail] = fn();
        report(id, name, pass, detail);
    } catch (const std::exception& e) {
        report(id, name, false, std::string("exception: ") + e.what());
    }
}

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

}  // namespace

int main() {
    const std::vector<RestartTypeState> fig_types = restart_fig_types();

    // C1: dual optimum of the restart fixture (4 types x 25 arms, M=16).
    criterion(1, "restart-dual-optimum", [&] {
        Timer tm;
        const DualSolution sol = restart_lambda_star(fig_types, 0.16);
        const double secs = tm.secs();
        const bool pass = sol.lambda_star > -12.1 && sol.lambda_star < -11.1 && secs < 60.0;
        return std::make_pair(pass, "lambda*=" + fmt("%.6f", sol.lambda_star) +
                                        " activation=" + fmt("%.6f", sol.activation_fraction) +
                                        " time=" + fmt("%.2fs", secs));
    });

    // C2: closed-form index equals the numeric Lagrangian index on the
    // truncated chain (states 1..30, all four types, 1e-4).
    criterion(2, "closed-form-vs-numeric-index", [&] {
        Timer tm;
        const double lam = restart_lambda_star(fig_types, 0.16).lambda_star;
        double worst = 0.0;
        for (const RestartTypeState& t : fig_types) {
            const ArmModel arm = make_restart_arm(t.spec.p, t.spec.w, 500);
            const IndexTable numeric = lagrangian_index_table(rvi_q(arm, lam), arm.label);
            for (long x = 1; x <= 30; ++x)
                worst = std::max(worst,
                                 std::fabs(restart_index(t.spec, lam, x) - numeric.at(static_cast<int>(x - 1))));
        }
        const double secs = tm.secs();
        const bool pass = worst < 1e-4 && secs < 120.0;
        return std::make_pair(pass, "max|closed-numeric|=" + fmt("%.3g", worst) +
                                        " time=" + fmt("%.2fs", secs));
    });

    // C3: passive-set nesting fails on the 3-state fixture over [-1,1] step 0.01.
    criterion(3, "non-indexability-detection", [&] {
        std::vector<double> grid;
        for (int k = 0; k <= 200; ++k) grid.push_back(-1.0 + 0.01 * k);
        const IndexabilityReport rep = indexability_check(make_nonindexable_arm(), grid);
        std::string where = "no violation";
        if (rep.violation)
            where = "violation in [" + fmt("%.2f", rep.violation->first) + "," +
                    fmt("%.2f", rep.violation->second) + "]";
        return std::make_pair(!rep.indexable, std::string("NON_INDEXABLE ") + where);
    });

    // C4: LIP on 3 arms with M=1 earns at least 95% of the product-MDP gain.
    criterion(4, "near-optimality-oracle", [&] {
        Timer tm;
        const BanditInstance inst = BanditInstance::homogeneous(make_nonindexable_arm(), 3, 1);
        const OracleResult oracle = product_mdp_oracle(inst);
        const DualSolution d = optimal_lambda(inst);
        const std::vector<IndexTable> tables = {
            lagrangian_index_table(rvi_q(inst.models[0], d.lambda_star), inst.models[0].label)};
        std::vector<double> rewards;
        for (std::uint64_t seed : {1, 2, 3})
            rewards.push_back(simulate(inst, SimPolicy::lip(tables), 1000000, seed).average_reward);
        const double med = median3(rewards);
        const double secs = tm.secs();
        const bool pass = med >= 0.95 * oracle.gain && secs < 300.0;
        return std::make_pair(pass, "lip=" + fmt("%.5f", med) + " oracle=" + fmt("%.5f", oracle.gain) +
                                        " ratio=" + fmt("%.4f", med / oracle.gain) +
                                        " time=" + fmt("%.2fs", secs));
    });

    // C5: tabular learners reach the exact dual optimum and the rvi table.
    criterion(5, "learner-consistency", [&] {
        const BanditInstance inst = nonindexable_instance(10, 3);
        const DualSolution d = optimal_lambda(inst);
        const QTable rvi = rvi_q(inst.models[0], d.lambda_star);
        const StepSchedules sched = builtin_schedules();
        // Fixed exploration keeps the dual attracted from both sides; the
        // decayed floor leaves the approach from below nearly driftless.
        const EpsPolicy eps{0.1, false, 0.99, 0.01};
        std::vector<double> lam1, lam2, dist;
        for (std::uint64_t seed : {1, 2, 3}) {
            const LearnResult r1 = run_alg1(inst, sched, eps, 200000, seed);
            lam1.push_back(r1.state.lambda);
            const TabularQ& q = r1.state.qtables[0];
            const double f = f_norm(q);
            double sup = 0.0;
            for (int x = 0; x < q.num_states(); ++x) {
                sup = std::max(sup, std::fabs(q.q0[static_cast<std::size_t>(x)] - f -
                                              rvi.q0[static_cast<std::size_t>(x)]));
                sup = std::max(sup, std::fabs(q.q1[static_cast<std::size_t>(x)] - f -
                                              rvi.q1[static_cast<std::size_t>(x)]));
            }
            dist.push_back(sup);
            const LearnResult r2 = run_alg2(inst, sched, eps, 200000, seed);
            lam2.push_back(r2.state.lambda);
        }
        const double m1 = median3(lam1), m2 = median3(lam2), md = median3(dist);
        const bool pass = std::fabs(m1 - d.lambda_star) <= 0.1 && md < 0.1 && std::fabs(m2 - m1) <= 0.15;
        return std::make_pair(pass, "lambda*=" + fmt("%.4f", d.lambda_star) +
                                        " alg1=" + fmt("%.4f", m1) + " alg2=" + fmt("%.4f", m2) +
                                        " supQ=" + fmt("%.4f", md));
    });

    // C6: exact-budget activation everywhere: hard-budget learner plus
    // simulate under index and random policies, 1e6 steps each.
    criterion(6, "hard-budget-invariant", [&] {
        const BanditInstance inst = nonindexable_instance(10, 3);
        const StepSchedules sched = builtin_schedules();
        const LearnResult r2 = run_alg2(inst, sched, EpsPolicy{}, 1000000, 1);
        const DualSolution d = optimal_lambda(inst);
        const std::vector<IndexTable> tables = {
            lagrangian_index_table(rvi_q(inst.models[0], d.lambda_star), inst.models[0].label)};
        const SimStats lip = simulate(inst, SimPolicy::lip(tables), 1000000, 2);
        const SimStats rnd = simulate(inst, SimPolicy::random(), 1000000, 3);
        long trace_bad = 0;
        for (const SimStats* s : {&lip, &rnd})
            for (long b : s->budget_trace)
                if (b != inst.budget) ++trace_bad;
        const bool pass = r2.budget_violations == 0 && lip.budget_violations == 0 &&
                          rnd.budget_violations == 0 && trace_bad == 0;
        return std::make_pair(pass, "alg2_violations=" + std::to_string(r2.budget_violations) +
                                        " sim_violations=" +
                                        std::to_string(lip.budget_violations + rnd.budget_violations) +
                                        " trace_mismatches=" + std::to_string(trace_bad));
    });

    // C7: closed-form deadline index matches the golden sweep (130 grid
    // states at c=0.8) and the spot values 0, 0.2, -0.4.
    criterion(7, "deadline-closed-form", [&] {
        const CsvFile golden = parse_csv(std::string(RMAB_TEST_DATA_DIR) + "/deadline_whittle_c08.csv");
        double worst = 0.0;
        for (const auto& row : golden.rows) {
            const int t = std::stoi(row[0]), b = std::stoi(row[1]);
            worst = std::max(worst, std::fabs(deadline_whittle(t, b, 0.8) - std::stod(row[2])));
        }
        const bool spots = deadline_whittle(5, 0, 0.8) == 0.0 &&
                           std::fabs(deadline_whittle(5, 2, 0.8) - 0.2) < 1e-12 &&
                           std::fabs(deadline_whittle(1, 3, 0.8) - (-0.4)) < 1e-12;
        const bool pass = golden.rows.size() == 130 && worst <= 1e-9 && spots;
        return std::make_pair(pass, "rows=" + std::to_string(golden.rows.size()) +
                                        " max|closed-golden|=" + fmt("%.3g", worst));
    });

    // C8: LIP and WIP average rewards agree within 5% of |WIP| at 1e6 steps
    // on the restart fixture and the homogeneous deadline fixture.
    criterion(8, "lip-wip-parity", [&] {
        Timer tm;
        const double lam = restart_lambda_star(fig_types, 0.16).lambda_star;
        const BanditInstance fig = restart_fig_instance();
        std::vector<IndexTable> lip, wip;
        for (std::size_t t = 0; t < fig_types.size(); ++t) {
            lip.push_back(restart_index_table(fig_types[t].spec, lam, fig.models[t].label));
            wip.push_back(restart_whittle_table(fig_types[t].spec, fig.models[t].label));
        }
        const double lr = simulate(fig, SimPolicy::lip(lip), 1000000, 1).average_reward;
        const double wr = simulate(fig, SimPolicy::wip(wip), 1000000, 1).average_reward;

        const BanditInstance dl = deadline_homog_instance(5, 2, 0.8);
        const DualSolution dsol = optimal_lambda(dl);
        const std::vector<IndexTable> dlip = {
            lagrangian_index_table(rvi_q(dl.models[0], dsol.lambda_star), dl.models[0].label)};
        const std::vector<IndexTable> dwip = {deadline_whittle_table(0.8, dl.models[0].label)};
        const double dlr = simulate(dl, SimPolicy::lip(dlip), 1000000, 1).average_reward;
        const double dwr = simulate(dl, SimPolicy::wip(dwip), 1000000, 1).average_reward;

        const bool pass = std::fabs(lr - wr) <= 0.05 * std::fabs(wr) &&
                          std::fabs(dlr - dwr) <= 0.05 * std::fabs(dwr);
        return std::make_pair(pass, "restart lip=" + fmt("%.3f", lr) + " wip=" + fmt("%.3f", wr) +
                                        "; deadline lip=" + fmt("%.4f", dlr) +
                                        " wip=" + fmt("%.4f", dwr) + " time=" + fmt("%.1fs", tm.secs()));
    });

    // C9: fluid fixed point unique from 3 starts; gap curve does not grow
    // from N=20 to N=500; per-arm reward never beats the dual bound by more
    // than two standard errors.
    criterion(9, "fluid-and-gap-asymptotics", [&] {
        Timer tm;
        const double lam = restart_lambda_star(fig_types, 0.16).lambda_star;
        const BanditInstance fig = restart_fig_instance();
        std::vector<IndexTable> tables;
        for (std::size_t t = 0; t < fig_types.size(); ++t)
            tables.push_back(restart_index_table(fig_types[t].spec, lam, fig.models[t].label));
        const FluidContext ctx = make_fluid_context(fig, std::move(tables));
        const FluidReport rep = fluid_fixed_point(ctx);
        const bool unique = rep.status == AttractorStatus::unique;

        std::vector<TypeFraction> mix;
        for (const RestartTypeState& t : fig_types)
            mix.push_back({make_restart_arm(t.spec.p, t.spec.w, t.spec.x_max), 0.25});
        const std::vector<GapRow> rows = optimality_gap(mix, 0.16, {20, 100, 500}, 200000, {1, 2, 3});
        const double se_pair = std::hypot(rows[0].stderr_reward, rows[2].stderr_reward);
        const bool curve = rows[2].gap <= rows[0].gap + 2.0 * se_pair;
        bool duality = true;
        for (const GapRow& r : rows)
            duality = duality && r.per_arm_reward <= r.bound + 2.0 * r.stderr_reward;

        const bool pass = unique && curve && duality;
        return std::make_pair(pass, std::string(attractor_name(rep.status)) +
                                        " gap20=" + fmt("%.4f", rows[0].gap) +
                                        " gap500=" + fmt("%.4f", rows[2].gap) +
                                        " duality=" + (duality ? "ok" : "violated") +
                                        " time=" + fmt("%.1fs", tm.secs()));
    });

    // C10: property suites: normalizer shift-equivariance, dual convexity,
    // quadratic-root residuals, value-branch Bellman residuals, kernel row
    // sums, and bit-identical replay.
    criterion(10, "property-suites", [&] {
        std::string bad;

        Rng rng(77);
        TabularQ q(7);
        for (int x = 0; x < 7; ++x) {
            q.add(x, 0, canonical_u01(rng) * 4.0 - 2.0);
            q.add(x, 1, canonical_u01(rng) * 4.0 - 2.0);
        }
        const double f0 = f_norm(q);
        for (int x = 0; x < 7; ++x) {
            q.add(x, 0, 0.37);
            q.add(x, 1, 0.37);
        }
        if (std::fabs(f_norm(q) - (f0 + 0.37)) > 1e-12) bad += " f_norm";

        auto convex_on = [](const std::vector<ArmModel>& arms, double alpha, double lo, double step,
                            int count) {
            std::vector<double> v;
            for (int i = 0; i < count; ++i) v.push_back(dual_value(arms, lo + step * i, alpha));
            for (int i = 1; i + 1 < count; ++i)
                if (v[static_cast<std::size_t>(i - 1)] + v[static_cast<std::size_t>(i + 1)] -
                        2.0 * v[static_cast<std::size_t>(i)] < -1e-9)
                    return false;
            return true;
        };
        if (!convex_on({make_nonindexable_arm()}, 0.3, -2.0, 0.2, 21)) bad += " dual-convexity(3state)";
        if (!convex_on({make_restart_arm(0.7, 0.2, 80), make_restart_arm(0.95, 0.9, 80)}, 0.16,
                       -15.0, 0.75, 21))
            bad += " dual-convexity(restart)";

        double qres = 0.0;
        for (double p : {0.3, 0.7, 0.95})
            for (double w : {0.2, 0.9})
                for (double lam : {-12.0, -3.0, -0.5}) {
                    const double x = continuous_threshold(p, w, lam);
                    qres = std::max(qres, std::fabs(p * w * x * x + 2.0 * w * (1.0 - p) * x +
                                                    (2.0 * lam - w * (1.0 - p))));
                }
        if (qres >= 1e-9) bad += " quadratic-root";

        const double lam = restart_lambda_star(fig_types, 0.16).lambda_star;
        double vres = 0.0;
        for (const RestartTypeState& t : fig_types) {
            const RestartArmSpec spec{t.spec.p, t.spec.w, 160};
            const RestartSolution sol = optimal_gain(spec.p, spec.w, lam);
            const std::vector<double> v = relative_values(spec, lam, sol);
            const ArmModel arm = make_restart_arm(spec.p, spec.w, spec.x_max);
            for (long x = 1; x <= 150; ++x) {
                const int i = static_cast<int>(x - 1);
                const int u = x >= sol.threshold ? 1 : 0;
                double ev = 0.0;
                for (int y = 0; y < arm.num_states; ++y)
                    ev += arm.p(i, u, y) * v[static_cast<std::size_t>(y)];
                const double res = v[static_cast<std::size_t>(i)] + sol.gain -
                                   (arm.r(i, u) + lam * u + ev);
                vres = std::max(vres, std::fabs(res));
            }
        }
        if (vres >= 1e-8) bad += " bellman-branches";

        for (const ArmModel& arm :
             {make_nonindexable_arm(), make_restart_arm(0.95, 0.9, 500), make_restart_arm(0.7, 0.2, 500),
              make_deadline_arm(0.8), make_deadline_arm(0.1)}) {
            for (int u = 0; u < 2 && bad.find(" row-sums") == std::string::npos; ++u)
                for (int x = 0; x < arm.num_states; ++x) {
                    double sum = 0.0;
                    for (int y = 0; y < arm.num_states; ++y) sum += arm.p(x, u, y);
                    if (std::fabs(sum - 1.0) > 1e-12) {
                        bad += " row-sums";
                        break;
                    }
                }
        }

        const BanditInstance ni = nonindexable_instance(10, 3);
        const StepSchedules sched = builtin_schedules();
        const LearnResult a1 = run_alg1(ni, sched, EpsPolicy{}, 2000, 7);
        const LearnResult a2 = run_alg1(ni, sched, EpsPolicy{}, 2000, 7);
        if (a1.lambda_trace != a2.lambda_trace || a1.avg_reward_trace != a2.avg_reward_trace)
            bad += " alg1-replay";
        const std::vector<IndexTable> tabs = a1.index_tables(ni);
        const SimStats s1 = simulate(ni, SimPolicy::lip(tabs), 20000, 9);
        const SimStats s2 = simulate(ni, SimPolicy::lip(tabs), 20000, 9);
        if (s1.average_reward != s2.average_reward || s1.moving_avg != s2.moving_avg)
            bad += " sim-replay";
        TrainConfig tiny;
        tiny.hidden = {8};
        const DqnResult d1 = run_dqn(ni, tiny, 200, 3);
        const DqnResult d2 = run_dqn(ni, tiny, 200, 3);
        if (d1.losses != d2.losses || d1.final_lambda != d2.final_lambda) bad += " dqn-replay";

        const std::string dir = std::filesystem::temp_directory_path().string();
        const std::vector<CsvRow> rows = {{static_cast<long long>(1), 0.25, std::string("x,y")}};
        emit_csv(dir + "/rmab_acc_rep1.csv", {"n", "v", "s"}, rows);
        emit_csv(dir + "/rmab_acc_rep2.csv", {"n", "v", "s"}, rows);
        if (read_bytes(dir + "/rmab_acc_rep1.csv") != read_bytes(dir + "/rmab_acc_rep2.csv"))
            bad += " csv-replay";

        return std::make_pair(bad.empty(), bad.empty() ? "all properties hold" : ("failed:" + bad));
    });

    // C11: DQN surrogate: learned index ordering matches the exact ordering
    // at lambda* (3-seed median), and the deadline lambda trace stabilizes.
    criterion(11, "dqn-surrogate", [&] {
        Timer tm;
        const BanditInstance ni = nonindexable_instance(10, 3);
        const DualSolution d = optimal_lambda(ni);
        const QTable q = rvi_q(ni.models[0], d.lambda_star);
        std::vector<int> exact_order = {0, 1, 2};
        std::sort(exact_order.begin(), exact_order.end(),
                  [&](int a, int b) { return q.gamma(a) < q.gamma(b); });

        // The learned ordering is only meaningful once the dual settles at
        // lambda*, and the exact gamma gap between states 0 and 2 is ~0.02,
        // so the net needs a long decayed-exploration run to resolve it.
        TrainConfig cfg;
        cfg.hidden = {32, 16};
        cfg.learning_rate = 3e-4f;
        cfg.sync_period = 50;
        cfg.trace_stride = 100;
        std::vector<std::vector<double>> gammas(3);
        for (std::uint64_t seed : {1, 2, 3}) {
            const DqnResult r = run_dqn(ni, cfg, 1000000, seed);
            for (int x = 0; x < 3; ++x)
                gammas[static_cast<std::size_t>(x)].push_back(r.index_tables[0].at(x));
        }
        std::vector<double> med(3);
        for (int x = 0; x < 3; ++x) med[static_cast<std::size_t>(x)] = median3(gammas[static_cast<std::size_t>(x)]);
        std::vector<int> learned_order = {0, 1, 2};
        std::sort(learned_order.begin(), learned_order.end(),
                  [&](int a, int b) { return med[static_cast<std::size_t>(a)] < med[static_cast<std::size_t>(b)]; });
        const bool order_ok = learned_order == exact_order;

        // The dual's residual fluctuation scales with beta(n) times the
        // replay-buffer feedback lag, so the flatness check needs a long run.
        const BanditInstance dl = deadline_homog_instance(5, 2, 0.8);
        TrainConfig dcfg;
        dcfg.hidden = {32, 16};
        dcfg.learning_rate = 1e-3f;
        dcfg.sync_period = 50;
        dcfg.trace_stride = 50;
        const DqnResult dr = run_dqn(dl, dcfg, 1200000, 2);
        const std::size_t tail = dr.lambda_trace.size() - dr.lambda_trace.size() / 10;
        std::vector<double> window(dr.lambda_trace.begin() + static_cast<long>(tail),
                                   dr.lambda_trace.end());
        double mean = 0.0;
        for (double v : window) mean += v;
        mean /= static_cast<double>(window.size());
        const double sd = sample_std(window, mean);
        const bool stable = sd < 0.1 * std::fabs(mean);

        const bool pass = order_ok && stable;
        return std::make_pair(pass, std::string("order=") + (order_ok ? "match" : "mismatch") +
                                        " lambda_mean=" + fmt("%.4f", mean) +
                                        " lambda_sd=" + fmt("%.4f", sd) +
                                        " time=" + fmt("%.1fs", tm.secs()));
    });

    std::printf("%s: %d/11 criteria passed\n", g_failures ? "FAIL" : "OK", 11 - g_failures);
    return g_failures ? 1 : 0;
}

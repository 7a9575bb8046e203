#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rmab/exact.hpp"
#include "rmab/models.hpp"
#include "rmab/simulate.hpp"

namespace {

using namespace rmab;

ArmModel action_symmetric_arm() {
    ArmModel arm;
    arm.num_states = 3;
    arm.kernel[0] = {0.2, 0.5, 0.3, 0.4, 0.1, 0.5, 0.25, 0.25, 0.5};
    arm.kernel[1] = arm.kernel[0];
    arm.reward[0] = {1.0, 2.0, 0.5};
    arm.reward[1] = arm.reward[0];
    arm.label = "symmetric3";
    return arm;
}

IndexTable table_of(std::vector<double> values) {
    IndexTable t;
    t.source = IndexSource::lagrangian;
    t.values = std::move(values);
    return t;
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

TEST(TopMSelect, DistinctValuesAreDeterministic) {
    Rng rng(1);
    const std::vector<double> values = {3.0, 1.0, 2.0, 5.0};
    const auto actions = top_m_select(values, 2, rng);
    EXPECT_EQ(actions, (std::vector<std::uint8_t>{1, 0, 0, 1}));
    const auto all_but_min = top_m_select(values, 3, rng);
    EXPECT_EQ(all_but_min, (std::vector<std::uint8_t>{1, 0, 1, 1}));
}

TEST(TopMSelect, DegenerateBudgets) {
    Rng rng(2);
    const std::vector<double> values = {1.0, 2.0, 3.0};
    EXPECT_EQ(top_m_select(values, 0, rng), (std::vector<std::uint8_t>{0, 0, 0}));
    EXPECT_EQ(top_m_select(values, 3, rng), (std::vector<std::uint8_t>{1, 1, 1}));
    EXPECT_THROW(top_m_select(values, -1, rng), std::invalid_argument);
    EXPECT_THROW(top_m_select(values, 4, rng), std::invalid_argument);
}

TEST(TopMSelect, UniformTieBreaking) {
    Rng rng(3);
    const std::vector<double> values(5, 1.25);
    std::vector<long> counts(5, 0);
    const long draws = 100000;
    for (long k = 0; k < draws; ++k) {
        const auto actions = top_m_select(values, 2, rng);
        ASSERT_EQ(std::accumulate(actions.begin(), actions.end(), 0), 2);
        for (std::size_t i = 0; i < 5; ++i) counts[i] += actions[i];
    }
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_NEAR(static_cast<double>(counts[i]) / static_cast<double>(draws), 0.4, 0.01) << "arm " << i;
    }
}

TEST(TopMSelect, BoundaryGroupOnlyIsRandomized) {
    Rng rng(4);
    const std::vector<double> values = {5.0, 1.0, 1.0, 1.0, 0.0};
    std::vector<long> counts(5, 0);
    const long draws = 60000;
    for (long k = 0; k < draws; ++k) {
        const auto actions = top_m_select(values, 2, rng);
        for (std::size_t i = 0; i < 5; ++i) counts[i] += actions[i];
    }
    EXPECT_EQ(counts[0], draws);
    EXPECT_EQ(counts[4], 0);
    for (std::size_t i = 1; i <= 3; ++i) {
        EXPECT_NEAR(static_cast<double>(counts[i]) / static_cast<double>(draws), 1.0 / 3.0, 0.01);
    }
}

TEST(Simulate, ExactBudgetInvariant) {
    const BanditInstance inst = BanditInstance::homogeneous(make_nonindexable_arm(), 6, 2);
    const QTable q = rvi_q(inst.models[0], -0.5);
    const SimPolicy lip = SimPolicy::lip({lagrangian_index_table(q, "a")});
    for (const SimPolicy& pol : {lip, SimPolicy::random()}) {
        const SimStats stats = simulate(inst, pol, 20000, 9);
        EXPECT_EQ(stats.budget_violations, 0);
        for (int b : stats.budget_trace) EXPECT_EQ(b, 2);
        for (double f : stats.activation_freq) {
            EXPECT_GE(f, 0.0);
            EXPECT_LE(f, 1.0);
        }
    }
}

TEST(Simulate, MovingAverageEqualsTotalWhenHorizonInsideWindow) {
    const BanditInstance inst = BanditInstance::homogeneous(make_nonindexable_arm(), 4, 1);
    const SimStats stats = simulate(inst, SimPolicy::random(), 1000, 5);
    ASSERT_FALSE(stats.moving_avg.empty());
    EXPECT_NEAR(stats.moving_avg.back(), stats.average_reward, 1e-9);
    ASSERT_GE(stats.sampled_steps.size(), 2u);
    EXPECT_EQ(stats.sampled_steps.front(), 100);
    EXPECT_EQ(stats.sampled_steps.back(), 1000);
}

TEST(Simulate, RandomMatchesIndexPolicyOnActionSymmetricArms) {
    const BanditInstance inst = BanditInstance::homogeneous(action_symmetric_arm(), 4, 2);
    const SimPolicy lip = SimPolicy::lip({table_of({0.3, 0.1, 0.2})});
    std::vector<double> lip_avg, rnd_avg;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        lip_avg.push_back(simulate(inst, lip, 50000, seed).average_reward);
        rnd_avg.push_back(simulate(inst, SimPolicy::random(), 50000, seed + 100).average_reward);
    }
    const double tol = 2.0 * std::hypot(stderr_of(lip_avg), stderr_of(rnd_avg)) + 1e-3;
    EXPECT_NEAR(mean_of(lip_avg), mean_of(rnd_avg), tol);
}

TEST(Simulate, LipNearProductOracleOnSmallInstance) {
    const ArmModel arm = make_nonindexable_arm();
    const BanditInstance inst = BanditInstance::homogeneous(arm, 3, 1);
    const DualSolution dual = optimal_lambda(inst);
    const QTable q = rvi_q(arm, dual.lambda_star);
    const SimPolicy lip = SimPolicy::lip({lagrangian_index_table(q, arm.label)});
    const OracleResult oracle = product_mdp_oracle(inst);
    const SimStats stats = simulate(inst, lip, 100000, 1);
    EXPECT_GE(stats.average_reward, 0.90 * oracle.gain);
    // Weak duality: the hard-budget optimum sits under the relaxed dual value.
    EXPECT_LE(oracle.gain, dual_value(inst, dual.lambda_star) + 1e-8);
}

TEST(Simulate, LipBeatsWhittleOnNonIndexableFixture) {
    const ArmModel arm = make_nonindexable_arm();
    const BanditInstance inst = BanditInstance::homogeneous(arm, 10, 3);
    const DualSolution dual = optimal_lambda(inst);
    const QTable q = rvi_q(arm, dual.lambda_star);
    const SimPolicy lip = SimPolicy::lip({lagrangian_index_table(q, arm.label)});
    IndexTable wtab;
    wtab.source = IndexSource::whittle;
    for (int x = 0; x < arm.num_states; ++x)
        wtab.values.push_back(whittle_index(arm, x, {-2.0, 2.0}).value);
    const SimPolicy wip = SimPolicy::wip({wtab});
    const double lip_avg = simulate(inst, lip, 300000, 1).average_reward;
    const double wip_avg = simulate(inst, wip, 300000, 1).average_reward;
    EXPECT_GT(lip_avg, wip_avg);
}

TEST(Simulate, DeterministicReplay) {
    const BanditInstance inst = BanditInstance::homogeneous(make_nonindexable_arm(), 5, 2);
    const QTable q = rvi_q(inst.models[0], -0.7);
    const SimPolicy lip = SimPolicy::lip({lagrangian_index_table(q, "a")});
    const SimStats a = simulate(inst, lip, 30000, 42);
    const SimStats b = simulate(inst, lip, 30000, 42);
    EXPECT_EQ(a.average_reward, b.average_reward);
    EXPECT_EQ(a.moving_avg, b.moving_avg);
    EXPECT_EQ(a.budget_trace, b.budget_trace);
    EXPECT_EQ(a.activation_freq, b.activation_freq);
    const SimStats c = simulate(inst, lip, 30000, 43);
    EXPECT_NE(a.average_reward, c.average_reward);
}

TEST(Simulate, ValidatesIndexTables) {
    const BanditInstance inst = BanditInstance::homogeneous(make_nonindexable_arm(), 4, 1);
    EXPECT_THROW(simulate(inst, SimPolicy::lip({}), 100, 1), std::invalid_argument);
    EXPECT_THROW(simulate(inst, SimPolicy::lip({table_of({1.0, 2.0})}), 100, 1), std::invalid_argument);
}

}  // namespace

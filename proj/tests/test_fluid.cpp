#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rmab/exact.hpp"
#include "rmab/experiments.hpp"
#include "rmab/fluid.hpp"
#include "rmab/models.hpp"
#include "rmab/restart.hpp"

namespace {

using namespace rmab;

// Both kernels have state-independent rows, so the flow reaches its fixed
// point in one step and the equilibrium is computable by hand.
ArmModel hand_two_state_arm() {
    ArmModel arm;
    arm.num_states = 2;
    arm.kernel[0] = {0.8, 0.2, 0.8, 0.2};
    arm.kernel[1] = {0.1, 0.9, 0.1, 0.9};
    arm.reward[0] = {0.1, 0.3};
    arm.reward[1] = {0.4, 1.0};
    arm.label = "hand2";
    return arm;
}

IndexTable table_of(std::vector<double> values) {
    IndexTable t;
    t.values = std::move(values);
    return t;
}

// The context points into the instance's models, so the fixture keeps the
// instance alive alongside it.
struct RestartFluidFixture {
    BanditInstance inst;
    DualSolution sol;
    FluidContext ctx;
};

RestartFluidFixture restart_fluid_fixture(int x_max) {
    RestartFluidFixture f;
    const std::vector<RestartTypeState> types = restart_fig_types(25, x_max);
    f.inst = restart_fig_instance(25, 16, x_max);
    f.sol = restart_lambda_star(types, f.inst.alpha());
    std::vector<IndexTable> tables;
    for (std::size_t t = 0; t < types.size(); ++t)
        tables.push_back(restart_index_table(types[t].spec, f.sol.lambda_star, f.inst.models[t].label));
    f.ctx = make_fluid_context(f.inst, std::move(tables));
    return f;
}

TEST(FluidContext, RankingClubsEqualIndicesAcrossTypes) {
    const ArmModel a = hand_two_state_arm();
    ArmModel b = hand_two_state_arm();
    b.label = "other";
    FluidContext ctx;
    ctx.models = {&a, &b};
    ctx.tables = {table_of({2.0, 1.0}), table_of({1.0, 3.0})};
    ctx.weights = {0.5, 0.5};
    ctx.alpha = 0.25;
    ctx.build_ranking();

    ASSERT_EQ(ctx.ranked.size(), 4u);
    EXPECT_EQ(ctx.ranked[0].t, 1);
    EXPECT_EQ(ctx.ranked[0].x, 1);
    EXPECT_EQ(ctx.ranked[1].t, 0);
    EXPECT_EQ(ctx.ranked[1].x, 0);
    EXPECT_EQ(ctx.ranked[2].t, 0);
    EXPECT_EQ(ctx.ranked[2].x, 1);
    EXPECT_EQ(ctx.ranked[3].t, 1);
    EXPECT_EQ(ctx.ranked[3].x, 0);
    EXPECT_EQ(ctx.group_end, (std::vector<std::size_t>{1, 2, 4}));
}

TEST(FluidStarts, MassesMatchTypeWeights) {
    const RestartFluidFixture fix = restart_fluid_fixture(40);
    const FluidContext& ctx = fix.ctx;
    for (const PopulationState& s :
         {fluid_uniform_start(ctx), fluid_corner_start(ctx, false), fluid_corner_start(ctx, true)}) {
        EXPECT_NEAR(s.total_mass(), 1.0, 1e-12);
        for (std::size_t t = 0; t < s.nu.size(); ++t) {
            double mass = 0.0;
            for (double v : s.nu[t]) mass += v;
            EXPECT_NEAR(mass, 0.25, 1e-12);
        }
    }
    const PopulationState lo = fluid_corner_start(ctx, false);
    EXPECT_DOUBLE_EQ(lo.nu[0][0], 0.25);
    const PopulationState hi = fluid_corner_start(ctx, true);
    EXPECT_DOUBLE_EQ(hi.nu[0].back(), 0.25);
}

TEST(FluidStep, ConservesMassAndActivatesAlphaEveryStep) {
    const RestartFluidFixture fix = restart_fluid_fixture(60);
    const FluidContext& ctx = fix.ctx;
    PopulationState s = fluid_uniform_start(ctx);
    for (int it = 0; it < 80; ++it) {
        const FluidStepResult step = fluid_step(s, ctx);
        EXPECT_NEAR(step.activated_mass, 0.16, 1e-12);
        EXPECT_NEAR(step.next.total_mass(), 1.0, 1e-12);
        for (std::size_t t = 0; t < step.next.nu.size(); ++t) {
            double mass = 0.0;
            for (double v : step.next.nu[t]) mass += v;
            EXPECT_NEAR(mass, 0.25, 1e-12);
        }
        s = step.next;
    }
}

TEST(FluidStep, SingleStateArmActivatesExactlyAlpha) {
    ArmModel arm;
    arm.num_states = 1;
    arm.kernel[0] = {1.0};
    arm.kernel[1] = {1.0};
    arm.reward[0] = {0.0};
    arm.reward[1] = {1.0};
    FluidContext ctx;
    ctx.models = {&arm};
    ctx.tables = {table_of({0.0})};
    ctx.weights = {1.0};
    ctx.alpha = 0.37;
    ctx.build_ranking();

    PopulationState s;
    s.nu = {{1.0}};
    const FluidStepResult step = fluid_step(s, ctx);
    EXPECT_DOUBLE_EQ(step.activated_mass, 0.37);
    EXPECT_DOUBLE_EQ(step.step_reward, 0.37);
    EXPECT_DOUBLE_EQ(step.next.nu[0][0], 1.0);
}

TEST(FluidFixedPoint, HandComputedTwoStateEquilibrium) {
    const ArmModel arm = hand_two_state_arm();
    FluidContext ctx;
    ctx.models = {&arm};
    ctx.tables = {table_of({1.0, 2.0})};
    ctx.weights = {1.0};
    ctx.alpha = 0.4;
    ctx.build_ranking();

    const FluidReport rep = fluid_fixed_point(ctx);
    ASSERT_EQ(rep.status, AttractorStatus::unique);
    EXPECT_NEAR(rep.fixed_point.nu[0][0], 0.52, 1e-10);
    EXPECT_NEAR(rep.fixed_point.nu[0][1], 0.48, 1e-10);
    // kappa at state 1 is 0.4/0.48; reward = 0.4*1.0 + 0.08*0.3 + 0.52*0.1.
    EXPECT_NEAR(rep.fixed_point_reward, 0.476, 1e-10);
    for (long it : rep.iterations) EXPECT_LE(it, 10);
    ASSERT_EQ(rep.traces.size(), 3u);
    for (const auto& trace : rep.traces) EXPECT_LT(trace.back().l1_change, 1e-10);
}

TEST(FluidFixedPoint, UniqueOnRestartFixtureWithWeakDuality) {
    const RestartFluidFixture fix = restart_fluid_fixture(100);
    const FluidContext& ctx = fix.ctx;
    const FluidReport rep = fluid_fixed_point(ctx);
    ASSERT_EQ(rep.status, AttractorStatus::unique);
    EXPECT_NEAR(fluid_step(rep.fixed_point, ctx).activated_mass, 0.16, 1e-9);

    const std::vector<RestartTypeState> types = restart_fig_types(25, 100);
    double per_arm_dual = -fix.sol.lambda_star * 0.16;
    for (const RestartTypeState& t : types)
        per_arm_dual += 0.25 * optimal_gain(t.spec.p, t.spec.w, fix.sol.lambda_star).gain;
    EXPECT_LE(rep.fixed_point_reward, per_arm_dual + 1e-8);
}

TEST(FluidFixedPoint, RejectsTooFewStarts) {
    const ArmModel arm = hand_two_state_arm();
    FluidContext ctx;
    ctx.models = {&arm};
    ctx.tables = {table_of({1.0, 2.0})};
    ctx.weights = {1.0};
    ctx.alpha = 0.4;
    ctx.build_ranking();

    std::vector<PopulationState> two = {fluid_uniform_start(ctx), fluid_corner_start(ctx, false)};
    EXPECT_THROW(fluid_fixed_point(ctx, 1e-10, 1000, two), std::invalid_argument);
    std::vector<PopulationState> three = {fluid_uniform_start(ctx), fluid_uniform_start(ctx),
                                          fluid_uniform_start(ctx)};
    const FluidReport rep = fluid_fixed_point(ctx, 1e-10, 1000, three);
    EXPECT_EQ(rep.status, AttractorStatus::unique);
}

TEST(OptimalityGap, ValidatesInputs) {
    std::vector<TypeFraction> mix = {{make_nonindexable_arm(), 1.0}};
    EXPECT_THROW(optimality_gap({}, 0.3, {4}, 100, {1}), std::invalid_argument);
    EXPECT_THROW(optimality_gap(mix, 0.3, {}, 100, {1}), std::invalid_argument);
    EXPECT_THROW(optimality_gap(mix, 0.3, {4}, 100, {}), std::invalid_argument);
    std::vector<TypeFraction> bad = {{make_nonindexable_arm(), 0.7},
                                     {make_restart_arm(0.5, 1.0, 10), 0.2}};
    EXPECT_THROW(optimality_gap(bad, 0.3, {4}, 100, {1}), std::invalid_argument);
}

TEST(OptimalityGap, RowIdentitiesAndWeakDuality) {
    const std::vector<TypeFraction> mix = {{make_nonindexable_arm(), 1.0}};
    const std::vector<GapRow> rows = optimality_gap(mix, 0.3, {4, 10}, 30000, {1, 2, 3});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].n, 4);
    EXPECT_EQ(rows[1].n, 10);
    for (const GapRow& r : rows) {
        EXPECT_DOUBLE_EQ(r.gap, r.bound - r.per_arm_reward);
        EXPECT_GE(r.stderr_reward, 0.0);
        EXPECT_LE(r.per_arm_reward, r.bound + 2.0 * r.stderr_reward + 1e-3);
    }
}

}  // namespace

#include "reachcert/env.hpp"
#include "reachcert/layouts.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace reachcert;

TEST(PuckDynamics, HandComputedCases) {
    PuckParams p;
    // decay 1 - 0.35 / 5 = 0.93, gain 0.35 / 5 = 0.07
    {
        const std::vector<double> x{0, 0, 0, 0}, u{1, 1};
        const auto y = true_step(p, x, u);
        EXPECT_DOUBLE_EQ(y[0], 0.0);
        EXPECT_DOUBLE_EQ(y[1], 0.0);
        EXPECT_DOUBLE_EQ(y[2], 0.07);
        EXPECT_DOUBLE_EQ(y[3], 0.07);
    }
    {
        const std::vector<double> x{1, 2, 0.1, -0.2}, u{0.5, -1};
        const auto y = true_step(p, x, u);
        EXPECT_NEAR(y[0], 1.035, 1e-15);
        EXPECT_NEAR(y[1], 1.93, 1e-15);
        EXPECT_NEAR(y[2], 0.128, 1e-15);
        EXPECT_NEAR(y[3], -0.256, 1e-15);
    }
}

TEST(PuckDynamics, ThreeDimensionalBlocks) {
    PuckParams p;
    p.dims = 3;
    const std::vector<double> x{0.1, 0.2, 0.3, 1.0, -1.0, 0.5}, u{0.0, 1.0, -1.0};
    const auto y = true_step(p, x, u);
    ASSERT_EQ(y.size(), 6u);
    EXPECT_NEAR(y[2], 0.3 + 0.35 * 0.5, 1e-15);
    EXPECT_NEAR(y[5], 0.93 * 0.5 - 0.07, 1e-15);
}

TEST(PuckDynamics, RejectsWrongShapes) {
    PuckParams p;
    const std::vector<double> x{0, 0, 0}, u{0, 0};
    EXPECT_THROW(true_step(p, x, u), std::invalid_argument);
    p.dims = 1;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(PuckDynamics, NoiseHasRequestedSpread) {
    PuckParams p;
    Rng rng(1);
    const std::vector<double> x{0.5, 0.5, 0, 0}, u{0, 0};
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = true_step(p, x, u, rng, 0.1)[0] - 0.5;
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 4 * 0.1 / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(s2 / n), 0.1, 0.003);
}

TEST(Classify, LayoutV1Labels) {
    const auto spec = spec_from_string(builtin_layout("v1"));
    const std::vector<double> goal{0.1, 0.1, 0, 0}, obst{0.5, 0.5, 0, 0}, safe{0.8, 0.2, 0, 0}, out{1.2, 0.5, 0, 0};
    EXPECT_EQ(classify(spec, goal), Label::goal);
    EXPECT_EQ(classify(spec, obst), Label::unsafe);
    EXPECT_EQ(classify(spec, safe), Label::safe);
    EXPECT_EQ(classify(spec, out), Label::unsafe);
}

TEST(Classify, VelocityDoesNotMatter) {
    const auto spec = spec_from_string(builtin_layout("v1"));
    const std::vector<double> a{0.8, 0.2, -0.5, 0.1}, b{0.8, 0.2, 7.0, -7.0};
    EXPECT_EQ(classify(spec, a), classify(spec, b));
}

TEST(Obstacle, TriangleContainmentAndIntersection) {
    const auto t = Obstacle::triangle({{{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}});
    const std::vector<double> in{0.2, 0.2}, out{0.6, 0.6};
    EXPECT_TRUE(obstacle_contains(t, in));
    EXPECT_FALSE(obstacle_contains(t, out));
    EXPECT_TRUE(obstacle_intersects(t, Box({Interval(0.4, 0.6), Interval(0.4, 0.6)})));
    EXPECT_FALSE(obstacle_intersects(t, Box({Interval(0.6, 0.8), Interval(0.6, 0.8)})));
    EXPECT_NEAR(obstacle_distance(t, out), std::sqrt(2.0) * 0.1, 1e-12);
}

TEST(Obstacle, RectangleDistance) {
    const auto r = Obstacle::rectangle(Box({Interval(0.4, 0.6), Interval(0.4, 0.6)}));
    const std::vector<double> p{0.9, 0.5}, q{0.5, 0.5};
    EXPECT_NEAR(obstacle_distance(r, p), 0.3, 1e-12);
    EXPECT_EQ(obstacle_distance(r, q), 0.0);
}

TEST(Spec, GoalMayNotTouchObstacle) {
    auto spec = spec_from_string(builtin_layout("v1"));
    spec.obstacles.push_back(Obstacle::rectangle(Box({Interval(0.2, 0.35), Interval(0.2, 0.35)})));
    EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Simulate, StopsAtGoalAndRecordsOutcome) {
    auto spec = spec_from_string(builtin_layout("v1"));
    spec.sigma = 0.0;
    Rng rng(0);
    PolicyFn stay = [](std::span<const double>, std::size_t) { return std::vector<double>{0.0, 0.0}; };
    const std::vector<double> in_goal{0.1, 0.1, 0, 0};
    const auto t = simulate(spec, TrueStepper{}, stay, in_goal, rng);
    EXPECT_EQ(t.outcome, Outcome::reached);
    EXPECT_EQ(t.states.size(), 1u);

    const std::vector<double> far{0.9, 0.9, 0, 0};
    const auto t2 = simulate(spec, TrueStepper{}, stay, far, rng);
    EXPECT_EQ(t2.outcome, Outcome::timeout);
    EXPECT_EQ(t2.states.size(), spec.horizon + 1);
}

TEST(Simulate, LeavingBoundsIsFailure) {
    auto spec = spec_from_string(builtin_layout("v1"));
    spec.sigma = 0.0;
    Rng rng(0);
    PolicyFn push = [](std::span<const double>, std::size_t) { return std::vector<double>{1.0, 0.0}; };
    const std::vector<double> edge{0.99, 0.8, 0.1, 0};
    EXPECT_EQ(simulate(spec, TrueStepper{}, push, edge, rng).outcome, Outcome::out_of_bounds);
}

TEST(Simulate, VelocityIsClipped) {
    auto spec = spec_from_string(builtin_layout("v1"));
    spec.sigma = 0.0;
    Rng rng(0);
    const std::vector<double> x{0.8, 0.8, 0.1, 0.1}, u{1.0, -1.0};
    const auto y = step(spec, TrueStepper{}, x, u, rng);
    EXPECT_EQ(y[2], 0.1);
    EXPECT_NEAR(y[3], 0.093 - 0.07, 1e-15);
}

TEST(Simulate, BnnStepperUsesNetwork) {
    ReachAvoidSpec spec;
    spec.bounds = Box({Interval(0.0, 1.0), Interval(0.0, 1.0)});
    spec.goal = Box({Interval(0.0, 0.1), Interval(0.0, 0.1)});
    spec.sigma = 0.0;
    // Identity-in-position, zero-velocity network over (x, u) -> x'.
    Architecture a({6, 4});
    std::vector<double> w(a.n_params(), 0.0);
    w[0 * 6 + 0] = 1.0;
    w[1 * 6 + 1] = 1.0;
    const Posterior post = SamplePosterior(a, {WeightSet{w}});
    Rng rng(0);
    const std::vector<double> x{0.5, 0.6, 0.0, 0.0}, u{0.3, 0.3};
    const auto y = step(spec, BnnStepper{&post}, x, u, rng);
    EXPECT_EQ(y, (std::vector<double>{0.5, 0.6, 0.0, 0.0}));
}

TEST(Episodes, DatasetShapesAndUnclippedTargets) {
    const auto spec = spec_from_string(builtin_layout("v1"));
    PuckParams p;
    Rng rng(4);
    EpisodeConfig cfg{5, 10, true};
    const auto d = collect_episode(spec, p, {}, cfg, rng);
    EXPECT_EQ(d.input_dim, 6u);
    EXPECT_EQ(d.target_dim, 4u);
    EXPECT_GT(d.size(), 0u);
    EXPECT_LE(d.size(), 50u);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto in = d.input(i);
        // Carried-forward velocities are clipped.
        EXPECT_GE(in[2], spec.velocity_clip.lo);
        EXPECT_LE(in[2], spec.velocity_clip.hi);
    }
}

TEST(Episodes, SameSeedSameData) {
    const auto spec = spec_from_string(builtin_layout("v1"));
    PuckParams p;
    EpisodeConfig cfg{3, 10, true};
    Rng r1(9), r2(9);
    EXPECT_EQ(collect_episode(spec, p, {}, cfg, r1).inputs, collect_episode(spec, p, {}, cfg, r2).inputs);
}

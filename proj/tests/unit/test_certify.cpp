#include "toys.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace reachcert;

namespace {

constexpr double kGlo = 0.4, kGhi = 0.6, kSigma = 0.02;
constexpr std::size_t kN = 5;

struct LineToy {
    ReachAvoidSpec spec = toys::line_spec(kGlo, kGhi, kN, kSigma);
    GridSpec grid = toys::line_grid(50);
    TabularPolicy policy = toys::drift_policy(grid, kGlo, kGhi, 0.1);
};

CertifyParams toy_params(std::size_t n_s = 20) {
    CertifyParams p;
    p.n_s = n_s;
    p.seed = 1;
    return p;
}

// Fraction of rollouts x' = w0 x + w1 u + b + noise (fresh weights every
// step) that reach the goal before leaving [0, 1].
double mc_reach(const ReachAvoidSpec& spec, const TabularPolicy& pol, const GaussianPosterior& q, double x0,
                std::size_t n, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < n; ++t) {
        double x = x0;
        for (std::size_t k = 0;; ++k) {
            if (x < spec.bounds[0].lo || x > spec.bounds[0].hi) break;
            if (x >= spec.goal[0].lo && x <= spec.goal[0].hi) {
                ++hits;
                break;
            }
            if (k == spec.horizon) break;
            const double pt[1] = {x};
            const double u = action(pol, pt, k)[0];
            double w[3];
            for (int j = 0; j < 3; ++j) w[j] = q.mean[j] + std::sqrt(q.variance[j]) * z(rng);
            x = w[0] * x + w[1] * u + w[2] + spec.sigma * z(rng);
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

} // namespace

TEST(Disjointify, ResultIsDisjointSubset) {
    Rng rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<WeightBox> boxes;
        for (int i = 0; i < 15; ++i) {
            const double a = u(rng), b = u(rng);
            boxes.emplace_back(std::vector<double>{a, b}, std::vector<double>{a + 0.2 * u(rng), b + 0.2 * u(rng)});
        }
        const auto kept = disjointify(boxes);
        EXPECT_TRUE(pairwise_disjoint(kept));
        ASSERT_FALSE(kept.empty());
        EXPECT_EQ(kept.front().lower, boxes.front().lower);
        for (const auto& k : kept) {
            bool found = false;
            for (const auto& b : boxes) found |= (b.lower == k.lower && b.upper == k.upper);
            EXPECT_TRUE(found);
        }
    }
}

TEST(Metrics, GoalCountsAsCoveredUnsafeExcluded) {
    const ValueTable k0{0, {1.0, 0.5, 0.0, 0.0}};
    const std::vector<Label> labels{Label::goal, Label::safe, Label::safe, Label::unsafe};
    const auto m = compute_metrics(k0, labels);
    EXPECT_DOUBLE_EQ(m.avg_lower_bound, 0.5);
    EXPECT_DOUBLE_EQ(m.coverage, 2.0 / 3.0);
}

TEST(Certify, TerminalAndLabelStructure) {
    LineToy t;
    const Posterior post = toys::shift_posterior();
    const auto r = run(post, Policy(t.policy), t.spec, t.grid, toy_params());
    ASSERT_EQ(r.tables.size(), kN + 1);
    EXPECT_EQ(r.horizon(), kN);
    for (std::size_t l = 0; l < t.grid.n_cells(); ++l) {
        const double goal = r.labels[l] == Label::goal ? 1.0 : 0.0;
        EXPECT_EQ(r.tables[kN][l], goal);
        for (std::size_t k = 0; k < kN; ++k) {
            EXPECT_GE(r.tables[k][l], 0.0);
            EXPECT_LE(r.tables[k][l], 1.0);
            if (r.labels[l] == Label::goal) {
                EXPECT_EQ(r.tables[k][l], 1.0);
            }
        }
    }
}

TEST(Certify, HandDerivedValuesNextToGoal) {
    // Cell [0.38, 0.40] moves to [0.48, 0.50] +- eps, inside the goal, and
    // touches a goal cell, so K = 1 * eta^1 * 1. One step earlier cell
    // [0.36, 0.38] earns eta^2.
    LineToy t;
    const Posterior post = toys::shift_posterior();
    const auto r = run(post, Policy(t.policy), t.spec, t.grid, toy_params());
    EXPECT_DOUBLE_EQ(r.tables[kN - 1][19], 0.99);
    EXPECT_DOUBLE_EQ(r.tables[kN - 1][18], 0.0);
    EXPECT_DOUBLE_EQ(r.tables[kN - 2][18], 0.99 * 0.99);
    EXPECT_DOUBLE_EQ(r.tables[kN - 1][30], 0.99); // symmetric side, moving left
}

TEST(Certify, LowerBoundsExactRecursionOracle) {
    LineToy t;
    const Posterior post = toys::shift_posterior();
    const auto mass = toys::gaussian_shift(t.policy, kSigma);
    const auto oracle = exact_recursion_oracle(mass, t.spec, 2000);
    for (std::size_t np : {2u, 4u}) {
        auto params = toy_params();
        params.n_p = np;
        const auto r = run(post, Policy(t.policy), t.spec, t.grid, params);
        std::size_t positive = 0;
        for (std::size_t k = 0; k <= kN; ++k)
            for (std::size_t l = 0; l < t.grid.n_cells(); ++l) {
                const Box b = cell_box(t.grid, l);
                double vmin = 1.0;
                for (int i = 0; i < 21; ++i) {
                    const double x = b[0].lo + (i + 0.5) / 21.0 * b[0].width();
                    vmin = std::min(vmin, oracle.value_at(t.spec, mass, x, k));
                }
                EXPECT_LE(r.tables[k][l], vmin + 1e-9) << "n_p " << np << " k " << k << " cell " << l;
                positive += r.labels[l] == Label::safe && r.tables[k][l] > 0.0;
            }
        EXPECT_GT(positive, 0u);
    }
}

TEST(Certify, SoundAgainstMonteCarloForGaussianPosterior) {
    LineToy t;
    const GaussianPosterior q(Architecture({2, 1}), {1.0, 1.0, 0.0}, {1e-4, 1e-4, 1e-4});
    const Posterior post = q;
    auto params = toy_params(50);
    const auto r = run(post, Policy(t.policy), t.spec, t.grid, params);
    Rng rng(123);
    std::size_t checked = 0;
    for (std::size_t l = 0; l < t.grid.n_cells(); ++l) {
        if (r.labels[l] != Label::safe || r.initial()[l] <= 0.0) continue;
        ++checked;
        const Box b = cell_box(t.grid, l);
        for (double f : {0.1, 0.5, 0.9}) {
            const std::size_t n = 20000;
            const double p = mc_reach(t.spec, t.policy, q, b[0].lo + f * b[0].width(), n, rng);
            const double se = std::sqrt(std::max(p * (1 - p), 1e-6) / n);
            EXPECT_LE(r.initial()[l], p + 3 * se) << "cell " << l;
        }
    }
    EXPECT_GT(checked, 0u);
}

TEST(Certify, WorkerCountDoesNotChangeResult) {
    LineToy t;
    const Posterior post = GaussianPosterior(Architecture({2, 1}), {1.0, 1.0, 0.0}, {1e-4, 1e-4, 1e-4});
    auto p1 = toy_params(30), p4 = p1;
    p4.workers = 4;
    const auto a = run(post, Policy(t.policy), t.spec, t.grid, p1);
    const auto b = run(post, Policy(t.policy), t.spec, t.grid, p4);
    for (std::size_t k = 0; k <= kN; ++k) EXPECT_EQ(a.tables[k], b.tables[k]);
}

TEST(Certify, SeedChangesDrawsOnly) {
    LineToy t;
    const Posterior post = GaussianPosterior(Architecture({2, 1}), {1.0, 1.0, 0.0}, {1e-4, 1e-4, 1e-4});
    auto p = toy_params(30);
    const auto a = run(post, Policy(t.policy), t.spec, t.grid, p);
    const auto again = run(post, Policy(t.policy), t.spec, t.grid, p);
    EXPECT_EQ(a.tables, again.tables);
    p.seed = 2;
    const auto b = run(post, Policy(t.policy), t.spec, t.grid, p);
    EXPECT_NE(a.tables[0], b.tables[0]);
}

TEST(Certify, AbsoluteWeightRadius) {
    LineToy t;
    const Posterior post = toys::shift_posterior();
    auto p = toy_params();
    p.rho_w = 1e-3;
    const auto r = run(post, Policy(t.policy), t.spec, t.grid, p);
    // A single sample always lies in its own box, so the mass is 1.
    EXPECT_DOUBLE_EQ(r.tables[kN - 1][19], 0.99);
}

TEST(Certify, StrictModeRejectsUndefinedCells) {
    LineToy t;
    TabularPolicy partial(t.grid, 1, 1);
    const Posterior post = toys::shift_posterior();
    auto p = toy_params();
    const auto r = run(post, Policy(partial), t.spec, t.grid, p);
    EXPECT_EQ(r.metrics.coverage, 10.0 / 50.0); // only the goal cells
    p.strict = true;
    EXPECT_THROW(run(post, Policy(partial), t.spec, t.grid, p), ConfigError);
}

TEST(Certify, RejectsMismatchedModel) {
    LineToy t;
    const Posterior wrong = SamplePosterior(Architecture({3, 1}), {WeightSet{{1, 1, 1, 0}}});
    EXPECT_THROW(run(wrong, Policy(t.policy), t.spec, t.grid, toy_params()), ConfigError);
    auto p = toy_params();
    p.n_p = 1;
    EXPECT_THROW(run(toys::shift_posterior(), Policy(t.policy), t.spec, t.grid, p), std::invalid_argument);
}

TEST(Certify, NoNoiseSkipsMarginButKeepsEta) {
    LineToy t;
    t.spec.sigma = 0.0;
    const Posterior post = toys::shift_posterior();
    const auto r = run(post, Policy(t.policy), t.spec, t.grid, toy_params());
    EXPECT_EQ(r.provenance.at("epsilon").get<double>(), 0.0);
    EXPECT_DOUBLE_EQ(r.tables[kN - 1][19], 0.99);
}

TEST(ForwardInvariance, SingleWaypointMatchesOneStep) {
    LineToy t;
    const Posterior post = toys::shift_posterior();
    const auto inv = forward_invariance(post, Policy(t.policy), t.spec, t.grid, toy_params(), {t.spec.goal}, {19, 30});
    ASSERT_EQ(inv.step_bounds.size(), 1u);
    EXPECT_DOUBLE_EQ(inv.step_bounds[0], 0.99);
    EXPECT_DOUBLE_EQ(inv.total, 0.99);
    const auto none = forward_invariance(post, Policy(t.policy), t.spec, t.grid, toy_params(), {t.spec.goal}, {5});
    EXPECT_EQ(none.total, 0.0);
}

TEST(ForwardInvariance, ChainsWaypoints) {
    LineToy t;
    const Posterior post = toys::shift_posterior();
    const std::vector<Box> wps{Box({Interval(0.4, 0.6)}), Box({Interval(0.4, 0.6)})};
    const auto inv = forward_invariance(post, Policy(t.policy), t.spec, t.grid, toy_params(), wps, {19});
    ASSERT_EQ(inv.step_bounds.size(), 2u);
    EXPECT_NEAR(inv.total, inv.step_bounds[0] * inv.step_bounds[1], 1e-15);
}

TEST(ExactOracle, OneStepMatchesAnalyticMass) {
    LineToy t;
    t.spec.horizon = 1;
    const auto mass = toys::gaussian_shift(t.policy, kSigma);
    const auto o = exact_recursion_oracle(mass, t.spec, 1000);
    for (double x : {0.3, 0.35, 0.385, 0.65}) {
        const double pt[1] = {x};
        const double m = x + action(t.policy, pt, 0)[0];
        const double expect = toys::normal_cdf((kGhi - m) / kSigma) - toys::normal_cdf((kGlo - m) / kSigma);
        EXPECT_NEAR(o.value_at(t.spec, mass, x, 0), expect, 1e-12) << x;
    }
    EXPECT_EQ(o.value_at(t.spec, mass, 0.5, 0), 1.0);
    EXPECT_EQ(o.value_at(t.spec, mass, 0.1, 1), 0.0);
}

TEST(ExactOracle, RejectsPlanarSystems) {
    ReachAvoidSpec s;
    s.bounds = Box({Interval(0, 1), Interval(0, 1)});
    s.goal = Box({Interval(0, 0.1), Interval(0, 0.1)});
    EXPECT_THROW(exact_recursion_oracle([](double, std::size_t, double, double) { return 0.0; }, s, 10),
                 std::invalid_argument);
}

#pragma once

// Small analytic systems shared by several test files.

#include "reachcert/reachcert.hpp"

#include <cmath>
#include <vector>

namespace toys {

using namespace reachcert;

/// 1-D workspace [0, 1] with goal [glo, ghi] and no obstacles.
inline ReachAvoidSpec line_spec(double glo, double ghi, std::size_t horizon, double sigma) {
    ReachAvoidSpec s;
    s.bounds = Box({Interval(0.0, 1.0)});
    s.goal = Box({Interval(glo, ghi)});
    s.horizon = horizon;
    s.sigma = sigma;
    s.eta = 0.99;
    return s;
}

inline GridSpec line_grid(std::size_t cells) {
    const double lo[1] = {0.0}, hi[1] = {1.0};
    const std::size_t n[1] = {cells};
    return GridSpec::from_counts(lo, hi, n, 1);
}

/// x' = x + u as a [2 -> 1] linear network with a single posterior sample.
inline SamplePosterior shift_posterior() {
    Architecture a({2, 1});
    return SamplePosterior(a, {WeightSet{{1.0, 1.0, 0.0}}});
}

/// Moves towards the goal with speed `speed`; zero inside the goal.
inline TabularPolicy drift_policy(const GridSpec& g, double glo, double ghi, double speed) {
    TabularPolicy p(g, 1, 1);
    for (std::size_t l = 0; l < g.n_cells(); ++l) {
        const double c = cell_center(g, l)[0];
        const double u[1] = {c < glo ? speed : (c > ghi ? -speed : 0.0)};
        p.set(0, l, u);
    }
    return p;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Mass of N(x + u(x), sigma^2) on [a, b].
inline TransitionMass gaussian_shift(const TabularPolicy& p, double sigma) {
    return [&p, sigma](double x, std::size_t k, double a, double b) {
        const double pt[1] = {x};
        const double m = x + action(p, pt, k)[0];
        return normal_cdf((b - m) / sigma) - normal_cdf((a - m) / sigma);
    };
}

/// Relative error (L2) between the analytic robust-loss gradient and central
/// differences with step h, for one random policy/dynamics/target setup.
inline double robust_loss_gradient_error(Rng& rng, double h = 1e-5) {
    std::uniform_real_distribution<double> unit(-1.0, 1.0), half(0.0, 1.0);
    const Architecture dyn({4, 6, 2}), pol({2, 5, 2});
    std::vector<WeightSet> samples{glorot_init(dyn, rng), glorot_init(dyn, rng)};
    const LossModel m{dyn, samples, pol};
    const auto theta = glorot_init(pol, rng, 0.5).values;
    const std::vector<double> x{unit(rng), unit(rng)};
    PointSet A, R;
    for (int i = 0; i < 3; ++i) {
        A.push_back({2 * unit(rng), 2 * unit(rng)});
        R.push_back({2 * unit(rng), 2 * unit(rng)});
    }
    const double alpha = half(rng), eps = 0.05 * half(rng);
    std::vector<double> g(theta.size(), 0.0);
    nn_policy_robust_loss(m, theta, x, A, R, alpha, eps, g, nullptr);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        auto tp = theta, tm = theta;
        tp[j] += h;
        tm[j] -= h;
        const double fd = (nn_policy_robust_loss(m, tp, x, A, R, alpha, eps, {}, nullptr) -
                           nn_policy_robust_loss(m, tm, x, A, R, alpha, eps, {}, nullptr)) /
                          (2 * h);
        num += (g[j] - fd) * (g[j] - fd);
        den += fd * fd;
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

} // namespace toys

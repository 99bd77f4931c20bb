#pragma once

// Episodic model-based learning of a tabular baseline policy: collect data,
// fit a BNN posterior, then improve the per-cell actions by gradient ascent
// on a discounted reward rolled out through the posterior mean dynamics.

#include "reachcert/env.hpp"
#include "reachcert/grid.hpp"
#include "reachcert/inference.hpp"
#include "reachcert/nn.hpp"
#include "reachcert/parallel.hpp"
#include "reachcert/policy.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace reachcert {

enum class InferenceKind { hmc, vi };

struct RewardConfig {
    double c_obstacle = 0.25;
    double proximity_radius = 0.1;
    std::size_t horizon = 10;
    double discount = 0.9;
};

struct LearningConfig {
    std::size_t episodes = 15;
    std::size_t trajectories = 20;
    std::size_t max_horizon = 25;
    std::vector<std::size_t> hidden{16};
    Activation activation = Activation::sigmoid;
    InferenceKind inference = InferenceKind::hmc;
    HmcConfig hmc;
    ViConfig vi;
    RewardConfig reward;
    double lr = 0.5;              // action gradient-ascent step
    std::size_t policy_iters = 5; // ascent iterations per episode
    std::size_t mean_samples = 10;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

/// Progress towards the goal centre minus a hinge penalty for coming within
/// `proximity_radius` of the nearest obstacle.
inline double reward(const ReachAvoidSpec& spec, std::span<const double> x, std::span<const double> x_next,
                     const RewardConfig& cfg) {
    const auto g = spec.goal.center();
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < spec.dims(); ++i) {
        d0 += (x[i] - g[i]) * (x[i] - g[i]);
        d1 += (x_next[i] - g[i]) * (x_next[i] - g[i]);
    }
    const double prox = nearest_obstacle_distance(spec, x_next);
    const double pen = std::isfinite(prox) ? std::max(0.0, cfg.proximity_radius - prox) : 0.0;
    return std::sqrt(d0) - std::sqrt(d1) - cfg.c_obstacle * pen;
}

/// Mean of the network output over a fixed set of weight samples (evenly
/// spaced samples of a sample posterior, or the mean of a Gaussian one).
struct MeanDynamics {
    Architecture arch;
    std::vector<WeightSet> samples;

    std::vector<double> operator()(std::span<const double> x, std::span<const double> u) const {
        std::vector<double> in(x.begin(), x.end());
        in.insert(in.end(), u.begin(), u.end());
        std::vector<double> y(arch.output_dim(), 0.0);
        for (const auto& w : samples) {
            const auto f = forward(arch, w, in);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] += f[i] / static_cast<double>(samples.size());
        }
        return y;
    }
};

inline MeanDynamics mean_dynamics(const Posterior& post, std::size_t max_samples) {
    MeanDynamics m{architecture(post), {}};
    if (const auto* s = std::get_if<SamplePosterior>(&post)) {
        const std::size_t n = std::min(max_samples, s->samples.size());
        for (std::size_t i = 0; i < n; ++i) m.samples.push_back(s->samples[(i * s->samples.size()) / n]);
    } else {
        m.samples.push_back(WeightSet{std::get<GaussianPosterior>(post).mean});
    }
    return m;
}

/// Discounted reward of taking u at x and following `policy` afterwards,
/// simulated without noise through `dyn`. Leaving the safe set ends the
/// rollout with a penalty of 1; reaching the goal ends it.
inline double discounted_return(const ReachAvoidSpec& spec, const MeanDynamics& dyn, const TabularPolicy& policy,
                                std::span<const double> x0, std::span<const double> u0, const RewardConfig& cfg) {
    std::vector<double> x(x0.begin(), x0.end()), u(u0.begin(), u0.end());
    double total = 0.0, disc = 1.0;
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
        auto y = dyn(x, u);
        clip_velocity(spec, y);
        total += disc * reward(spec, x, y, cfg);
        const Label lab = classify(spec, y);
        if (lab == Label::unsafe) return total - disc;
        if (lab == Label::goal) return total;
        x = std::move(y);
        u = action(policy, x, 0);
        disc *= cfg.discount;
    }
    return total;
}

/// One Jacobi sweep of finite-difference gradient ascent over every cell.
inline void improve_policy(const ReachAvoidSpec& spec, const MeanDynamics& dyn, TabularPolicy& policy,
                           const LearningConfig& cfg) {
    const auto& g = policy.grid;
    const TabularPolicy frozen = policy;
    const double h = 1e-3;
    std::vector<std::vector<double>> updated(g.n_cells());
    parallel_for(g.n_cells(), cfg.workers, [&](std::size_t cell) {
        const auto x = cell_center(g, cell);
        if (classify(spec, x) != Label::safe) return;
        const auto u = frozen.get(0, cell);
        std::vector<double> up(u.begin(), u.end()), dn(u.begin(), u.end()), next(u.begin(), u.end());
        for (std::size_t i = 0; i < u.size(); ++i) {
            up[i] = u[i] + h;
            dn[i] = u[i] - h;
            const double gi = (discounted_return(spec, dyn, frozen, x, up, cfg.reward) -
                               discounted_return(spec, dyn, frozen, x, dn, cfg.reward)) /
                              (2.0 * h);
            up[i] = dn[i] = u[i];
            next[i] = std::clamp(u[i] + cfg.lr * gi, -1.0, 1.0);
        }
        updated[cell] = std::move(next);
    });
    for (std::size_t cell = 0; cell < g.n_cells(); ++cell)
        if (!updated[cell].empty()) policy.set(0, cell, updated[cell]);
}

struct LearningResult {
    TabularPolicy policy;
    std::optional<Posterior> posterior;
    Dataset data;
};

inline Posterior fit_posterior(const Dataset& data, const Architecture& arch, const LearningConfig& cfg,
                               std::uint64_t seed) {
    const auto prior = glorot_prior(arch);
    if (cfg.inference == InferenceKind::hmc) {
        HmcConfig h = cfg.hmc;
        h.seed = seed;
        return hmc_fit(data, arch, prior, h);
    }
    ViConfig v = cfg.vi;
    v.seed = seed;
    return vi_fit(data, arch, prior, v);
}

/// Episode 0 collects random transitions; later episodes deploy the current
/// policy with process noise. After each episode the posterior is refitted on
/// all data and the actions improved.
inline LearningResult learn_initial_policy(const ReachAvoidSpec& spec, const PuckParams& params,
                                           const GridSpec& policy_grid, const LearningConfig& cfg) {
    spec.validate();
    params.validate();
    const std::size_t d = params.dims;
    LearningResult res;
    res.policy = TabularPolicy(policy_grid, d, 1);
    Rng rng = make_rng(cfg.seed, {0x4c524eULL});
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> u(d);
    for (std::size_t cell = 0; cell < policy_grid.n_cells(); ++cell) {
        for (auto& v : u) v = unit(rng);
        res.policy.set(0, cell, u);
    }
    res.data = Dataset(3 * d, 2 * d);

    std::vector<std::size_t> widths{3 * d};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(2 * d);
    const Architecture arch(widths, cfg.activation);

    for (std::size_t e = 0; e < cfg.episodes; ++e) {
        Rng erng = make_rng(cfg.seed, {0x45504953ULL, e});
        EpisodeConfig ec{cfg.trajectories, cfg.max_horizon, e == 0};
        const TabularPolicy current = res.policy;
        PolicyFn fn = [&current](std::span<const double> x, std::size_t k) { return action(current, x, k); };
        res.data.append(collect_episode(spec, params, fn, ec, erng));
        res.posterior = fit_posterior(res.data, arch, cfg, derive_seed(cfg.seed, {0x464954ULL, e}));
        const MeanDynamics dyn = mean_dynamics(*res.posterior, cfg.mean_samples);
        for (std::size_t it = 0; it < cfg.policy_iters; ++it) improve_policy(spec, dyn, res.policy, cfg);
    }
    return res;
}

} // namespace reachcert

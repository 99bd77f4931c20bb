#pragma once

// Approximate Bayesian inference over network weights: Hamiltonian Monte
// Carlo with a Metropolis correction, and mean-field Gaussian variational
// inference with reparameterised gradients.

#include "reachcert/nn.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace reachcert {

struct InferenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HmcConfig {
    std::size_t n_samples = 500;
    std::size_t burn_in = 25;
    std::size_t leapfrog_steps = 10;
    double step_size = 0.05;
    double likelihood_sigma = 0.1;
    std::uint64_t seed = 0;
    // Adam steps towards the posterior mode before the chain starts.
    std::size_t warm_start_steps = 1000;
    double warm_start_lr = 0.01;
    // Consecutive rejections that trigger a step-size reduction.
    std::size_t rejection_burst = 2;
    double anneal_factor = 0.9;
    std::size_t max_nonfinite = 100;
};

struct HmcDiagnostics {
    double acceptance_rate = 0.0;
    double final_step_size = 0.0;
    double mse = 0.0;
};

struct ViConfig {
    std::size_t epochs = 1500;
    double learning_rate = 0.025;
    double likelihood_sigma = 0.1;
    std::uint64_t seed = 0;
    std::size_t batch_size = 0; // 0 = full batch
    double init_stddev_scale = 0.01;
};

struct ViDiagnostics {
    std::vector<double> elbo_trace; // one estimate per epoch
    double mse = 0.0;
};

/// Negative log posterior (up to a constant) and its gradient:
///   U(w) = 1/2 sum_i |y_i - f^w(x_i)|^2 / sigma^2 + 1/2 sum_j w_j^2 / prior_j
class NegLogPosterior {
public:
    NegLogPosterior(const Dataset& data, const Architecture& arch, std::vector<double> prior_var, double sigma)
        : data_(data), arch_(arch), prior_(std::move(prior_var)), inv_var_(1.0 / (sigma * sigma)) {
        if (data.empty()) throw std::invalid_argument("dataset is empty");
        if (data.input_dim != arch.input_dim() || data.target_dim != arch.output_dim())
            throw std::invalid_argument("dataset does not match network architecture");
        if (prior_.size() != arch.n_params()) throw std::invalid_argument("prior does not match architecture");
        if (!(sigma > 0.0)) throw std::invalid_argument("likelihood sigma must be positive");
    }

    /// Data term over rows [begin, end), scaled by `scale`. Adds its gradient
    /// to `grad` when non-empty.
    double data_term(std::span<const double> w, std::span<double> grad, std::span<const std::size_t> rows,
                     double scale = 1.0) const {
        double u = 0.0;
        std::vector<double> g_out(arch_.output_dim());
        for (auto i : rows) {
            const auto y = forward_traced(arch_, w, data_.input(i), trace_);
            const auto t = data_.target(i);
            double sq = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) {
                const double r = y[k] - t[k];
                sq += r * r;
                g_out[k] = scale * r * inv_var_;
            }
            u += 0.5 * scale * sq * inv_var_;
            if (!grad.empty()) backward(arch_, w, trace_, g_out, grad);
        }
        return u;
    }

    double operator()(std::span<const double> w, std::span<double> grad) const {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
        double u = data_term(w, grad, all_rows());
        for (std::size_t j = 0; j < w.size(); ++j) {
            u += 0.5 * w[j] * w[j] / prior_[j];
            if (!grad.empty()) grad[j] += w[j] / prior_[j];
        }
        return u;
    }

    double mse(std::span<const double> w) const {
        double s = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) {
            const auto y = forward_traced(arch_, w, data_.input(i), trace_);
            const auto t = data_.target(i);
            for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - t[k]) * (y[k] - t[k]);
        }
        return s / static_cast<double>(data_.size() * data_.target_dim);
    }

    const std::vector<std::size_t>& all_rows() const {
        if (rows_.size() != data_.size()) {
            rows_.resize(data_.size());
            std::iota(rows_.begin(), rows_.end(), std::size_t{0});
        }
        return rows_;
    }
    const std::vector<double>& prior() const { return prior_; }
    double inv_var() const { return inv_var_; }
    std::size_t n_rows() const { return data_.size(); }

private:
    const Dataset& data_;
    const Architecture& arch_;
    std::vector<double> prior_;
    double inv_var_;
    mutable ForwardTrace trace_;
    mutable std::vector<std::size_t> rows_;
};

namespace detail {

struct Adam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    std::size_t t = 0;
    Adam(std::size_t n, double rate) : lr(rate), m(n, 0.0), v(n, 0.0) {}
    void step(std::span<double> x, std::span<const double> g) {
        ++t;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

} // namespace detail

/// HMC over the network weights with identity mass matrix and a fixed number
/// of leapfrog steps. The step size shrinks by `anneal_factor` after every
/// burst of consecutive rejections (non-finite energies count as rejections).
inline SamplePosterior hmc_fit(const Dataset& data, const Architecture& arch, const std::vector<double>& prior,
                               const HmcConfig& cfg, HmcDiagnostics* diag = nullptr) {
    if (cfg.n_samples == 0 || cfg.leapfrog_steps == 0 || !(cfg.step_size > 0.0))
        throw std::invalid_argument("HMC configuration must be positive");
    NegLogPosterior potential(data, arch, prior, cfg.likelihood_sigma);
    Rng rng(derive_seed(cfg.seed, {0x484d43ULL}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const std::size_t n = arch.n_params();
    std::vector<double> w = glorot_init(arch, rng).values;
    std::vector<double> grad(n);

    if (cfg.warm_start_steps > 0) {
        detail::Adam opt(n, cfg.warm_start_lr);
        for (std::size_t s = 0; s < cfg.warm_start_steps; ++s) {
            potential(w, grad);
            if (!detail::all_finite(grad)) throw InferenceError("non-finite gradient during HMC warm start");
            opt.step(w, grad);
        }
    }

    double u = potential(w, grad);
    if (!std::isfinite(u)) throw InferenceError("non-finite initial energy");

    double step = cfg.step_size;
    std::vector<double> p(n), w_new(n), g_new(n);
    std::vector<WeightSet> samples;
    samples.reserve(cfg.n_samples);
    std::size_t accepted = 0, proposals = 0, consecutive_rejects = 0, nonfinite = 0;

    for (std::size_t it = 0; it < cfg.burn_in + cfg.n_samples; ++it) {
        for (auto& pi : p) pi = normal(rng);
        double kinetic0 = 0.0;
        for (double pi : p) kinetic0 += 0.5 * pi * pi;

        w_new = w;
        g_new = grad;
        for (std::size_t i = 0; i < n; ++i) p[i] -= 0.5 * step * g_new[i];
        double u_new = u;
        bool finite = true;
        for (std::size_t l = 0; l < cfg.leapfrog_steps; ++l) {
            for (std::size_t i = 0; i < n; ++i) w_new[i] += step * p[i];
            u_new = potential(w_new, g_new);
            if (!std::isfinite(u_new) || !detail::all_finite(g_new)) {
                finite = false;
                break;
            }
            const double scale = (l + 1 == cfg.leapfrog_steps) ? 0.5 : 1.0;
            for (std::size_t i = 0; i < n; ++i) p[i] -= scale * step * g_new[i];
        }

        bool accept = false;
        if (finite) {
            nonfinite = 0;
            double kinetic1 = 0.0;
            for (double pi : p) kinetic1 += 0.5 * pi * pi;
            const double log_ratio = (u + kinetic0) - (u_new + kinetic1);
            accept = std::isfinite(log_ratio) && (log_ratio >= 0.0 || unif(rng) < std::exp(log_ratio));
        } else if (++nonfinite >= cfg.max_nonfinite) {
            throw InferenceError("HMC energy stayed non-finite after repeated step-size reductions");
        }

        if (accept) {
            w.swap(w_new);
            grad.swap(g_new);
            u = u_new;
            consecutive_rejects = 0;
        } else if (++consecutive_rejects >= cfg.rejection_burst || !finite) {
            step *= cfg.anneal_factor;
            consecutive_rejects = 0;
        }

        if (it >= cfg.burn_in) {
            ++proposals;
            if (accept) ++accepted;
            samples.push_back(WeightSet{w});
        }
    }

    Provenance prov{{"seed_hi", static_cast<double>(cfg.seed >> 32)},
                    {"seed_lo", static_cast<double>(cfg.seed & 0xffffffffULL)},
                    {"burn_in", static_cast<double>(cfg.burn_in)},
                    {"step_size", cfg.step_size},
                    {"final_step_size", step},
                    {"leapfrog_steps", static_cast<double>(cfg.leapfrog_steps)},
                    {"likelihood_sigma", cfg.likelihood_sigma},
                    {"acceptance_rate", proposals ? static_cast<double>(accepted) / proposals : 0.0}};
    if (diag) {
        diag->acceptance_rate = prov["acceptance_rate"];
        diag->final_step_size = step;
        std::vector<double> mean(n, 0.0);
        for (const auto& s : samples)
            for (std::size_t i = 0; i < n; ++i) mean[i] += s.values[i] / static_cast<double>(samples.size());
        diag->mse = potential.mse(mean);
    }
    return SamplePosterior(arch, std::move(samples), std::move(prov));
}

/// Mean-field Gaussian VI maximising the ELBO with Adam and one
/// reparameterised sample per step. Standard deviations are parameterised by
/// their logarithm.
inline GaussianPosterior vi_fit(const Dataset& data, const Architecture& arch, const std::vector<double>& prior,
                                const ViConfig& cfg, ViDiagnostics* diag = nullptr) {
    NegLogPosterior potential(data, arch, prior, cfg.likelihood_sigma);
    Rng rng(derive_seed(cfg.seed, {0x5649ULL}));
    std::normal_distribution<double> normal(0.0, 1.0);

    const std::size_t n = arch.n_params();
    std::vector<double> mean = glorot_init(arch, rng).values;
    std::vector<double> log_sd(n);
    for (std::size_t j = 0; j < n; ++j) log_sd[j] = std::log(cfg.init_stddev_scale * std::sqrt(prior[j]));

    const std::size_t rows = data.size();
    const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size > rows) ? rows : cfg.batch_size;
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});

    // Joint parameter vector [mean, log_sd] for Adam.
    std::vector<double> theta(2 * n), g_theta(2 * n), eps(n), w(n), g_w(n);
    detail::Adam opt(2 * n, cfg.learning_rate);
    const double log_norm = 0.5 * static_cast<double>(rows * data.target_dim) *
                            std::log(2.0 * std::numbers::pi * cfg.likelihood_sigma * cfg.likelihood_sigma);

    std::vector<double> trace;
    trace.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double elbo_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < rows; start += batch) {
            const std::size_t stop = std::min(rows, start + batch);
            std::span<const std::size_t> idx(order.data() + start, stop - start);
            const double scale = static_cast<double>(rows) / static_cast<double>(idx.size());

            for (std::size_t j = 0; j < n; ++j) {
                eps[j] = normal(rng);
                w[j] = mean[j] + std::exp(log_sd[j]) * eps[j];
            }
            std::fill(g_w.begin(), g_w.end(), 0.0);
            const double nll = potential.data_term(w, g_w, idx, scale);

            double kl = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double s = std::exp(log_sd[j]);
                const double ratio = s * s / prior[j];
                kl += 0.5 * (ratio + mean[j] * mean[j] / prior[j] - 1.0 - std::log(ratio));
                g_theta[j] = g_w[j] + mean[j] / prior[j];
                g_theta[n + j] = g_w[j] * eps[j] * s + (ratio - 1.0);
            }
            const double elbo = -(nll + log_norm) - kl;
            if (!std::isfinite(elbo) || !detail::all_finite(g_theta)) throw InferenceError("ELBO diverged");
            elbo_sum += elbo;
            ++n_batches;

            std::copy(mean.begin(), mean.end(), theta.begin());
            std::copy(log_sd.begin(), log_sd.end(), theta.begin() + static_cast<std::ptrdiff_t>(n));
            opt.step(theta, g_theta);
            std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(n), mean.begin());
            std::copy(theta.begin() + static_cast<std::ptrdiff_t>(n), theta.end(), log_sd.begin());
        }
        trace.push_back(elbo_sum / static_cast<double>(n_batches));
    }

    std::vector<double> var(n);
    for (std::size_t j = 0; j < n; ++j) var[j] = std::exp(2.0 * log_sd[j]);
    Provenance prov{{"seed_hi", static_cast<double>(cfg.seed >> 32)},
                    {"seed_lo", static_cast<double>(cfg.seed & 0xffffffffULL)},
                    {"epochs", static_cast<double>(cfg.epochs)},
                    {"learning_rate", cfg.learning_rate},
                    {"likelihood_sigma", cfg.likelihood_sigma}};
    if (diag) {
        diag->elbo_trace = trace;
        diag->mse = potential.mse(mean);
    }
    return GaussianPosterior(arch, std::move(mean), std::move(var), std::move(prov));
}

} // namespace reachcert

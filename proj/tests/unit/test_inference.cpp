#include "reachcert/inference.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace reachcert;

namespace {

// y = w x + b with Gaussian prior N(0, p) on (w, b) and noise N(0, s^2): the
// posterior is Gaussian with precision X^T X / s^2 + I / p.
struct Conjugate {
    Dataset data{1, 1};
    double prior = 4.0;
    double sigma = 1.0;
    double mean[2];
    double cov[2][2];

    Conjugate() {
        const double xs[] = {-1.0, 0.0, 1.0, 2.0};
        const double ys[] = {-0.8, 0.7, 2.1, 3.4};
        double sxx = 0, sx = 0, sxy = 0, sy = 0;
        for (int i = 0; i < 4; ++i) {
            data.add(std::span<const double>(&xs[i], 1), std::span<const double>(&ys[i], 1));
            sxx += xs[i] * xs[i];
            sx += xs[i];
            sxy += xs[i] * ys[i];
            sy += ys[i];
        }
        const double s2 = sigma * sigma;
        const double a = sxx / s2 + 1 / prior, b = sx / s2, d = 4 / s2 + 1 / prior;
        const double det = a * d - b * b;
        cov[0][0] = d / det;
        cov[1][1] = a / det;
        cov[0][1] = cov[1][0] = -b / det;
        mean[0] = cov[0][0] * sxy / s2 + cov[0][1] * sy / s2;
        mean[1] = cov[1][0] * sxy / s2 + cov[1][1] * sy / s2;
    }
    std::vector<double> prior_vec() const { return {prior, prior}; }
};

// Standard error of a chain mean by non-overlapping batch means.
double batch_means_se(const std::vector<double>& x, std::size_t batches = 40) {
    const std::size_t len = x.size() / batches;
    std::vector<double> m(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t i = 0; i < len; ++i) m[b] += x[b * len + i];
        m[b] /= static_cast<double>(len);
    }
    double mu = 0.0;
    for (double v : m) mu += v / batches;
    double var = 0.0;
    for (double v : m) var += (v - mu) * (v - mu) / (batches - 1);
    return std::sqrt(var / batches);
}

} // namespace

TEST(Hmc, ConjugateLinearModelMoments) {
    Conjugate c;
    Architecture a({1, 1});
    HmcConfig cfg;
    cfg.n_samples = 4000;
    cfg.burn_in = 200;
    cfg.step_size = 0.2;
    cfg.likelihood_sigma = c.sigma;
    cfg.seed = 11;
    HmcDiagnostics diag;
    const auto post = hmc_fit(c.data, a, c.prior_vec(), cfg, &diag);
    ASSERT_EQ(post.samples.size(), 4000u);
    EXPECT_GT(diag.acceptance_rate, 0.5);
    for (std::size_t j = 0; j < 2; ++j) {
        std::vector<double> x;
        for (const auto& s : post.samples) x.push_back(s.values[j]);
        double m = 0.0;
        for (double v : x) m += v / x.size();
        double var = 0.0;
        for (double v : x) var += (v - m) * (v - m) / x.size();
        EXPECT_LE(std::abs(m - c.mean[j]), 3 * batch_means_se(x)) << "parameter " << j;
        EXPECT_NEAR(var, c.cov[j][j], 0.15 * c.cov[j][j]) << "parameter " << j;
    }
}

TEST(Hmc, SameSeedSameSamples) {
    Conjugate c;
    Architecture a({1, 1});
    HmcConfig cfg;
    cfg.n_samples = 50;
    cfg.likelihood_sigma = 1.0;
    cfg.seed = 3;
    const auto p1 = hmc_fit(c.data, a, c.prior_vec(), cfg);
    const auto p2 = hmc_fit(c.data, a, c.prior_vec(), cfg);
    EXPECT_EQ(p1.samples, p2.samples);
    cfg.seed = 4;
    EXPECT_NE(hmc_fit(c.data, a, c.prior_vec(), cfg).samples, p1.samples);
}

TEST(Hmc, ReportsAcceptanceAndAnneals) {
    Conjugate c;
    Architecture a({1, 1});
    HmcConfig cfg;
    cfg.n_samples = 100;
    cfg.step_size = 5.0; // far too large: rejections shrink the step
    cfg.likelihood_sigma = 1.0;
    HmcDiagnostics diag;
    const auto post = hmc_fit(c.data, a, c.prior_vec(), cfg, &diag);
    EXPECT_LT(diag.final_step_size, 5.0);
    EXPECT_GE(diag.acceptance_rate, 0.0);
    EXPECT_LE(diag.acceptance_rate, 1.0);
    EXPECT_DOUBLE_EQ(post.provenance.at("acceptance_rate"), diag.acceptance_rate);
}

TEST(Hmc, NonFiniteEnergyRaises) {
    Dataset d(1, 1);
    const double x[1] = {1.0}, y[1] = {std::numeric_limits<double>::quiet_NaN()};
    d.add(x, y);
    HmcConfig cfg;
    cfg.warm_start_steps = 0;
    cfg.n_samples = 10;
    EXPECT_THROW(hmc_fit(d, Architecture({1, 1}), {1.0, 1.0}, cfg), InferenceError);
}

TEST(Hmc, RejectsEmptyAndMismatchedData) {
    Architecture a({1, 1});
    HmcConfig cfg;
    EXPECT_THROW(hmc_fit(Dataset(1, 1), a, {1.0, 1.0}, cfg), std::invalid_argument);
    Dataset d(2, 1);
    const double x[2] = {1.0, 2.0}, y[1] = {0.0};
    d.add(x, y);
    EXPECT_THROW(hmc_fit(d, a, {1.0, 1.0}, cfg), std::invalid_argument);
    cfg.n_samples = 0;
    Conjugate c;
    EXPECT_THROW(hmc_fit(c.data, a, c.prior_vec(), cfg), std::invalid_argument);
}

TEST(Vi, ConjugateLinearModelMeanField) {
    // The optimal mean-field factor of a Gaussian target has the exact mean and
    // variance 1 / precision_jj.
    Conjugate c;
    Architecture a({1, 1});
    ViConfig cfg;
    cfg.likelihood_sigma = c.sigma;
    cfg.epochs = 30000;
    cfg.learning_rate = 0.002;
    cfg.seed = 5;
    const auto q = vi_fit(c.data, a, c.prior_vec(), cfg);
    const double det = c.cov[0][0] * c.cov[1][1] - c.cov[0][1] * c.cov[0][1];
    const double prec[2] = {c.cov[1][1] / det, c.cov[0][0] / det};
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_NEAR(q.mean[j], c.mean[j], 0.05 * std::sqrt(c.cov[j][j]) + 0.02) << "parameter " << j;
        EXPECT_NEAR(q.variance[j], 1.0 / prec[j], 0.25 / prec[j]) << "parameter " << j;
    }
}

TEST(Vi, PredictiveMeanFitsLinearData) {
    Dataset d(1, 1);
    for (int i = 0; i <= 20; ++i) {
        const double x[1] = {-1.0 + 0.1 * i}, y[1] = {2.0 * x[0] + 1.0};
        d.add(x, y);
    }
    Architecture a({1, 1});
    ViConfig cfg;
    cfg.seed = 1;
    ViDiagnostics diag;
    const auto q = vi_fit(d, a, glorot_prior(a), cfg, &diag);
    for (double x : {0.0, 0.5, 1.0}) {
        const std::vector<double> in{x};
        const double pred = forward(a, q.mean, in)[0];
        EXPECT_NEAR(pred, 2 * x + 1, 0.05 * std::abs(2 * x + 1)) << "x = " << x;
    }
    EXPECT_LT(diag.mse, 1e-2);
}

TEST(Vi, ElboImprovesOverTraining) {
    Conjugate c;
    Architecture a({1, 4, 1});
    ViConfig cfg;
    cfg.likelihood_sigma = 0.5;
    cfg.epochs = 1500;
    cfg.seed = 9;
    ViDiagnostics diag;
    vi_fit(c.data, a, glorot_prior(a), cfg, &diag);
    ASSERT_EQ(diag.elbo_trace.size(), 1500u);
    // Means of consecutive windows of 300 epochs must not drop by more than
    // three standard errors of the window mean.
    const std::size_t w = 300;
    double prev_mean = -INFINITY;
    for (std::size_t s = 0; s + w <= diag.elbo_trace.size(); s += w) {
        double m = 0.0, v = 0.0;
        for (std::size_t i = s; i < s + w; ++i) m += diag.elbo_trace[i] / w;
        for (std::size_t i = s; i < s + w; ++i) v += (diag.elbo_trace[i] - m) * (diag.elbo_trace[i] - m) / (w - 1);
        EXPECT_GE(m, prev_mean - 3 * std::sqrt(v / w)) << "window at " << s;
        prev_mean = m;
    }
    EXPECT_GT(prev_mean, diag.elbo_trace.front());
}

TEST(Vi, ZeroEpochsKeepsInitialisation) {
    Conjugate c;
    Architecture a({1, 1});
    ViConfig cfg;
    cfg.epochs = 0;
    const auto q = vi_fit(c.data, a, c.prior_vec(), cfg);
    for (double v : q.variance) EXPECT_NEAR(v, 0.01 * 0.01 * c.prior, 1e-15);
}

TEST(Vi, SameSeedSameResult) {
    Conjugate c;
    Architecture a({1, 1});
    ViConfig cfg;
    cfg.epochs = 100;
    cfg.seed = 2;
    const auto q1 = vi_fit(c.data, a, c.prior_vec(), cfg);
    const auto q2 = vi_fit(c.data, a, c.prior_vec(), cfg);
    EXPECT_EQ(q1.mean, q2.mean);
    EXPECT_EQ(q1.variance, q2.variance);
}

TEST(Vi, DivergenceRaises) {
    Dataset d(1, 1);
    const double x[1] = {1.0}, y[1] = {std::numeric_limits<double>::infinity()};
    d.add(x, y);
    ViConfig cfg;
    cfg.epochs = 5;
    EXPECT_THROW(vi_fit(d, Architecture({1, 1}), {1.0, 1.0}, cfg), InferenceError);
}

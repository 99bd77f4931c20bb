#pragma once

// Training per-step neural policies against certified value tables with a
// set-distance loss and its interval-bounded robust counterpart.

#include "reachcert/certify.hpp"
#include "reachcert/inference.hpp"
#include "reachcert/interval.hpp"
#include "reachcert/nn.hpp"
#include "reachcert/policy.hpp"
#include "reachcert/synthesize.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace reachcert {

using PointSet = std::vector<std::vector<double>>;

/// Dynamics ensemble plus policy network the loss is evaluated for.
struct LossModel {
    const Architecture& dynamics;
    std::span<const WeightSet> samples; // W-bar, summed as written
    const Architecture& policy;
    Interval action_bounds{-1.0, 1.0};
};

namespace detail {

inline double nearest_distance(std::span<const double> y, const PointSet& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : set) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - p[i]) * (y[i] - p[i]);
        best = std::min(best, s);
    }
    return std::sqrt(best);
}

inline void check_loss_inputs(const LossModel& m, std::span<const double> theta, std::span<const double> x,
                              const PointSet& A, const PointSet& R) {
    if (m.samples.empty()) throw std::invalid_argument("loss needs at least one dynamics sample");
    if (theta.size() != m.policy.n_params()) throw std::invalid_argument("policy parameters do not match architecture");
    if (x.size() != m.policy.input_dim() || x.size() + m.policy.output_dim() != m.dynamics.input_dim())
        throw std::invalid_argument("state, policy and dynamics dimensions disagree");
    for (const auto* set : {&A, &R})
        for (const auto& p : *set)
            if (p.size() != m.dynamics.output_dim()) throw std::invalid_argument("target point has the wrong dimension");
}

inline void warn_empty(std::ostream* warn, const PointSet& A, const PointSet& R) {
    if (!warn) return;
    if (A.empty()) *warn << "warning: target set A is empty; its loss term is dropped\n";
    if (R.empty()) *warn << "warning: avoid set R is empty; its loss term is dropped\n";
}

} // namespace detail

/// -alpha * dist(y, A) + (1 - alpha) * dist(y, R) with
/// y = sum over W-bar of f^w(x, clamp(pi(x))). An empty set drops its term.
inline double nn_policy_loss(const LossModel& m, std::span<const double> theta, std::span<const double> x,
                             const PointSet& A, const PointSet& R, double alpha, std::ostream* warn = &std::clog) {
    detail::check_loss_inputs(m, theta, x, A, R);
    detail::warn_empty(warn, A, R);
    auto u = forward(m.policy, theta, x);
    for (auto& v : u) v = std::clamp(v, m.action_bounds.lo, m.action_bounds.hi);
    std::vector<double> in(x.begin(), x.end());
    in.insert(in.end(), u.begin(), u.end());
    std::vector<double> y(m.dynamics.output_dim(), 0.0);
    for (const auto& w : m.samples) {
        const auto f = forward(m.dynamics, w, in);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += f[i];
    }
    double loss = 0.0;
    if (!A.empty()) loss -= alpha * detail::nearest_distance(y, A);
    if (!R.empty()) loss += (1.0 - alpha) * detail::nearest_distance(y, R);
    return loss;
}

/// Upper bound of the loss over the box [x - eps, x + eps]: the prediction
/// sum is bounded by interval propagation through the policy, the action
/// clamp and every dynamics sample, then
///   -alpha * min_a dist(a, Y) + (1 - alpha) * min_r maxdist(r, Y).
/// With eps = 0 this equals nn_policy_loss. The gradient with respect to
/// the policy parameters is accumulated into `grad` when it is non-empty.
inline double nn_policy_robust_loss(const LossModel& m, std::span<const double> theta, std::span<const double> x,
                                    const PointSet& A, const PointSet& R, double alpha, double eps,
                                    std::span<double> grad = {}, std::ostream* warn = &std::clog) {
    detail::check_loss_inputs(m, theta, x, A, R);
    if (!(eps >= 0.0)) throw std::invalid_argument("robustness radius must be non-negative");
    detail::warn_empty(warn, A, R);
    const std::size_t n = x.size(), c = m.policy.output_dim(), ny = m.dynamics.output_dim();

    std::vector<double> xlo(n), xhi(n);
    for (std::size_t i = 0; i < n; ++i) {
        xlo[i] = x[i] - eps;
        xhi[i] = x[i] + eps;
    }
    IntervalTrace tp;
    ibp_fixed_traced(m.policy, theta, xlo, xhi, tp);
    const auto& raw_lo = tp.lo.back();
    const auto& raw_hi = tp.hi.back();
    std::vector<double> in_lo = xlo, in_hi = xhi;
    for (std::size_t i = 0; i < c; ++i) {
        in_lo.push_back(std::clamp(raw_lo[i], m.action_bounds.lo, m.action_bounds.hi));
        in_hi.push_back(std::clamp(raw_hi[i], m.action_bounds.lo, m.action_bounds.hi));
    }

    std::vector<IntervalTrace> td(m.samples.size());
    std::vector<double> ylo(ny, 0.0), yhi(ny, 0.0);
    for (std::size_t s = 0; s < m.samples.size(); ++s) {
        ibp_fixed_traced(m.dynamics, m.samples[s].values, in_lo, in_hi, td[s]);
        for (std::size_t i = 0; i < ny; ++i) {
            ylo[i] += td[s].lo.back()[i];
            yhi[i] += td[s].hi.back()[i];
        }
    }

    // Closest-point distance from the nearest target point, and farthest
    // corner distance from the nearest avoid point (by that measure).
    double loss = 0.0;
    std::vector<double> gylo(ny, 0.0), gyhi(ny, 0.0);
    if (!A.empty()) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < A.size(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < ny; ++i) {
                const double e = std::max({ylo[i] - A[j][i], 0.0, A[j][i] - yhi[i]});
                s += e * e;
            }
            if (s < best) {
                best = s;
                arg = j;
            }
        }
        const double d = std::sqrt(best);
        loss -= alpha * d;
        if (d > 0.0)
            for (std::size_t i = 0; i < ny; ++i) {
                const double a = A[arg][i];
                if (ylo[i] - a > 0.0) gylo[i] -= alpha * (ylo[i] - a) / d;
                else if (a - yhi[i] > 0.0) gyhi[i] -= alpha * (yhi[i] - a) / d;
            }
    }
    if (!R.empty()) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < R.size(); ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < ny; ++i) {
                const double e = std::max(R[j][i] - ylo[i], yhi[i] - R[j][i]);
                s += e * e;
            }
            if (s < best) {
                best = s;
                arg = j;
            }
        }
        const double d = std::sqrt(best);
        loss += (1.0 - alpha) * d;
        if (d > 0.0)
            for (std::size_t i = 0; i < ny; ++i) {
                const double r = R[arg][i];
                if (r - ylo[i] >= yhi[i] - r) gylo[i] += (1.0 - alpha) * (ylo[i] - r) / d;
                else gyhi[i] += (1.0 - alpha) * (yhi[i] - r) / d;
            }
    }

    if (!grad.empty()) {
        if (grad.size() != theta.size()) throw std::invalid_argument("gradient buffer has the wrong size");
        std::vector<double> ga_lo(c, 0.0), ga_hi(c, 0.0), gin_lo, gin_hi;
        for (std::size_t s = 0; s < m.samples.size(); ++s) {
            ibp_fixed_backward(m.dynamics, m.samples[s].values, td[s], gylo, gyhi, {}, gin_lo, gin_hi);
            for (std::size_t i = 0; i < c; ++i) {
                ga_lo[i] += gin_lo[n + i];
                ga_hi[i] += gin_hi[n + i];
            }
        }
        for (std::size_t i = 0; i < c; ++i) {
            if (!m.action_bounds.contains(raw_lo[i])) ga_lo[i] = 0.0;
            if (!m.action_bounds.contains(raw_hi[i])) ga_hi[i] = 0.0;
        }
        ibp_fixed_backward(m.policy, theta, tp, ga_lo, ga_hi, grad, gin_lo, gin_hi);
    }
    return loss;
}

struct NeuralSynthesisResult {
    NeuralPolicy policy;
    CertificationResult certificate;
};

/// Cell centres with K >= p_t (targets) and K <= 1 - p_t (to avoid, unsafe
/// cells included).
inline std::pair<PointSet, PointSet> threshold_sets(const GridSpec& g, const ValueTable& K,
                                                    const std::vector<Label>& labels, double p_t) {
    PointSet A, R;
    for (std::size_t l = 0; l < g.n_cells(); ++l) {
        const double v = labels[l] == Label::unsafe ? 0.0 : K.values[l];
        if (v >= p_t) A.push_back(cell_center(g, l));
        if (v <= 1.0 - p_t) R.push_back(cell_center(g, l));
    }
    return {std::move(A), std::move(R)};
}

/// Backward over k: pi_k starts from pi_{k+1}, is trained by Adam on the
/// robust loss over states sampled from safe cells (one posterior draw per
/// step), and is certified against K_{k+1} before moving on. The loss is
/// applied with the roles of the target and avoid sets exchanged (and alpha
/// replaced by 1 - alpha) so that minimisation moves predictions towards
/// high-value cells and away from low-value ones.
inline NeuralSynthesisResult train_nn_policy(const Posterior& posterior, const ReachAvoidSpec& spec,
                                             const GridSpec& grid, const CertifyParams& params,
                                             const SynthesisConfig& scfg, std::ostream* log = &std::clog) {
    spec.validate();
    scfg.validate();
    CertifyContext ctx(posterior, spec, grid, params);
    const auto& dyn = ctx.arch();
    const std::size_t n = grid.dims();
    const std::size_t c = dyn.input_dim() - n;
    const std::size_t N = spec.horizon;
    Architecture parch({n, scfg.nn.hidden, c}, Activation::sigmoid);

    Rng rng = make_rng(scfg.seed, {0x4e4e50ULL});
    std::vector<WeightSet> steps(N, glorot_init(parch, rng));
    NeuralSynthesisResult res;
    auto& cert = res.certificate;
    cert.labels = ctx.labels;
    cert.tables.resize(N + 1);
    cert.tables[N] = goal_indicator(ctx.labels, N);

    std::vector<std::size_t> safe;
    for (std::size_t l = 0; l < grid.n_cells(); ++l)
        if (ctx.labels[l] == Label::safe) safe.push_back(l);

    std::vector<double> theta = steps[N - 1].values, grad(parch.n_params());
    for (std::size_t k = N; k-- > 0;) {
        auto [A, R] = threshold_sets(grid, cert.tables[k + 1], ctx.labels, scfg.p_t);
        if (log && (A.empty() || R.empty()))
            *log << "warning: step " << k << ": " << (A.empty() ? "target" : "avoid")
                 << " set is empty; its loss term is dropped\n";
        if (!safe.empty() && scfg.nn.epochs > 0 && scfg.nn.n_states > 0) {
            detail::Adam opt(theta.size(), scfg.nn.learning_rate);
            Rng trng = make_rng(scfg.seed, {k, 0x545241ULL});
            std::uniform_int_distribution<std::size_t> pick(0, safe.size() - 1);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::vector<double> x(n);
            for (std::size_t e = 0; e < scfg.nn.epochs; ++e)
                for (std::size_t s = 0; s < scfg.nn.n_states; ++s) {
                    const Box b = cell_box(grid, safe[pick(trng)]);
                    for (std::size_t i = 0; i < n; ++i) x[i] = b[i].lo + unit(trng) * b[i].width();
                    const WeightSet w = draw(posterior, trng);
                    LossModel lm{dyn, std::span<const WeightSet>(&w, 1), parch};
                    std::fill(grad.begin(), grad.end(), 0.0);
                    nn_policy_robust_loss(lm, theta, x, R, A, 1.0 - scfg.alpha, scfg.eps_robust, grad, nullptr);
                    opt.step(theta, grad);
                }
        }
        steps[k].values = theta;
        NeuralPolicy partial(parch, steps);
        cert.tables[k] = certify_step(ctx, Policy(std::move(partial)), cert.tables[k + 1], k);
    }
    res.policy = NeuralPolicy(parch, std::move(steps));
    cert.metrics = compute_metrics(cert.tables[0], cert.labels);
    cert.provenance = {{"params", to_json(params)}, {"synthesis", to_json(scfg)}, {"epsilon", ctx.eps}, {"horizon", N}};
    return res;
}

} // namespace reachcert

#pragma once

// Weight posteriors of a Bayesian network and the probability-mass queries
// over weight boxes that turn accepted boxes into certified probabilities.

#include "reachcert/interval.hpp"
#include "reachcert/nn.hpp"
#include "reachcert/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace reachcert {

/// Regression pairs (state ++ action) -> next state, stored row-major.
struct Dataset {
    std::size_t input_dim = 0;
    std::size_t target_dim = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    Dataset() = default;
    Dataset(std::size_t in, std::size_t out) : input_dim(in), target_dim(out) {}

    std::size_t size() const { return input_dim == 0 ? 0 : inputs.size() / input_dim; }
    bool empty() const { return size() == 0; }

    std::span<const double> input(std::size_t i) const { return {inputs.data() + i * input_dim, input_dim}; }
    std::span<const double> target(std::size_t i) const { return {targets.data() + i * target_dim, target_dim}; }

    void add(std::span<const double> x, std::span<const double> y) {
        if (x.size() != input_dim || y.size() != target_dim)
            throw std::invalid_argument("dataset row has the wrong dimensions");
        inputs.insert(inputs.end(), x.begin(), x.end());
        targets.insert(targets.end(), y.begin(), y.end());
    }
    void append(const Dataset& o) {
        if (o.empty()) return;
        if (empty() && inputs.empty()) {
            input_dim = o.input_dim;
            target_dim = o.target_dim;
        }
        if (o.input_dim != input_dim || o.target_dim != target_dim)
            throw std::invalid_argument("datasets differ in dimensions");
        inputs.insert(inputs.end(), o.inputs.begin(), o.inputs.end());
        targets.insert(targets.end(), o.targets.begin(), o.targets.end());
    }
};

using Provenance = std::map<std::string, double>;

/// Equal-mass set of weight samples, e.g. from HMC.
struct SamplePosterior {
    Architecture arch;
    std::vector<WeightSet> samples;
    Provenance provenance;

    SamplePosterior() = default;
    SamplePosterior(Architecture a, std::vector<WeightSet> s, Provenance p = {})
        : arch(std::move(a)), samples(std::move(s)), provenance(std::move(p)) {
        if (samples.empty()) throw std::invalid_argument("sample posterior needs at least one sample");
        for (const auto& w : samples)
            if (w.values.size() != arch.n_params())
                throw std::invalid_argument("posterior sample does not match architecture");
    }
};

/// Mean-field Gaussian over the flattened weights.
struct GaussianPosterior {
    Architecture arch;
    std::vector<double> mean;
    std::vector<double> variance;
    Provenance provenance;

    GaussianPosterior() = default;
    GaussianPosterior(Architecture a, std::vector<double> m, std::vector<double> v, Provenance p = {})
        : arch(std::move(a)), mean(std::move(m)), variance(std::move(v)), provenance(std::move(p)) {
        if (mean.size() != arch.n_params() || variance.size() != arch.n_params())
            throw std::invalid_argument("gaussian posterior does not match architecture");
        for (double x : variance)
            if (!(x > 0.0)) throw std::invalid_argument("gaussian posterior variances must be positive");
    }
};

using Posterior = std::variant<SamplePosterior, GaussianPosterior>;

inline const Architecture& architecture(const Posterior& p) {
    return std::visit([](const auto& q) -> const Architecture& { return q.arch; }, p);
}

inline WeightSet draw(const SamplePosterior& p, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, p.samples.size() - 1);
    return p.samples[pick(rng)];
}

inline WeightSet draw(const GaussianPosterior& p, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    WeightSet w{std::vector<double>(p.mean.size())};
    for (std::size_t i = 0; i < w.values.size(); ++i) w.values[i] = p.mean[i] + std::sqrt(p.variance[i]) * normal(rng);
    return w;
}

inline WeightSet draw(const Posterior& p, Rng& rng) {
    return std::visit([&](const auto& q) { return draw(q, rng); }, p);
}

/// Per-parameter standard deviation (population convention for samples).
inline std::vector<double> posterior_stddev(const Posterior& post) {
    if (const auto* g = std::get_if<GaussianPosterior>(&post)) {
        std::vector<double> s(g->variance.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sqrt(g->variance[i]);
        return s;
    }
    const auto& p = std::get<SamplePosterior>(post);
    const std::size_t n = p.arch.n_params();
    const double m = static_cast<double>(p.samples.size());
    std::vector<double> mean(n, 0.0), var(n, 0.0);
    for (const auto& w : p.samples)
        for (std::size_t i = 0; i < n; ++i) mean[i] += w.values[i] / m;
    for (const auto& w : p.samples)
        for (std::size_t i = 0; i < n; ++i) var[i] += (w.values[i] - mean[i]) * (w.values[i] - mean[i]) / m;
    for (auto& v : var) v = std::sqrt(v);
    return var;
}

/// Mass of N(mu, sd^2) on [lo, hi], using erfc on the tail side.
inline double normal_interval_mass(double lo, double hi, double mu, double sd) {
    const double s = sd * std::sqrt(2.0);
    const double zl = (lo - mu) / s, zu = (hi - mu) / s;
    double m;
    if (zl >= 0.0)
        m = 0.5 * (std::erfc(zl) - std::erfc(zu));
    else if (zu <= 0.0)
        m = 0.5 * (std::erfc(-zu) - std::erfc(-zl));
    else
        m = 0.5 * (std::erf(zu) - std::erf(zl));
    return std::clamp(m, 0.0, 1.0);
}

namespace detail {
inline void check_box(const Architecture& arch, const WeightBox& box) {
    if (box.size() != arch.n_params()) throw std::invalid_argument("weight box does not match posterior");
    for (std::size_t i = 0; i < box.size(); ++i)
        if (!(box.lower[i] <= box.upper[i]))
            throw std::invalid_argument("weight box lower bound exceeds upper bound");
}
} // namespace detail

inline double box_mass(const SamplePosterior& p, const WeightBox& box) {
    detail::check_box(p.arch, box);
    std::size_t inside = 0;
    for (const auto& w : p.samples)
        if (box.contains(w.values)) ++inside;
    return static_cast<double>(inside) / static_cast<double>(p.samples.size());
}

inline double box_mass(const GaussianPosterior& p, const WeightBox& box) {
    detail::check_box(p.arch, box);
    double m = 1.0;
    for (std::size_t j = 0; j < box.size() && m > 0.0; ++j)
        m *= normal_interval_mass(box.lower[j], box.upper[j], p.mean[j], std::sqrt(p.variance[j]));
    return m;
}

inline double box_mass(const Posterior& p, const WeightBox& box) {
    return std::visit([&](const auto& q) { return box_mass(q, box); }, p);
}

inline bool pairwise_disjoint(std::span<const WeightBox> boxes) {
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j)
            if (boxes[i].overlaps(boxes[j])) return false;
    return true;
}

/// Mass of each box of a pairwise-disjoint family. For sample posteriors a
/// sample is credited to the first box containing it (at most one, given
/// disjointness).
inline std::vector<double> box_masses(const Posterior& post, std::span<const WeightBox> boxes) {
    if (!pairwise_disjoint(boxes)) throw std::invalid_argument("weight boxes overlap; disjointify them first");
    std::vector<double> out(boxes.size(), 0.0);
    if (const auto* s = std::get_if<SamplePosterior>(&post)) {
        for (const auto& b : boxes) detail::check_box(s->arch, b);
        const double unit = 1.0 / static_cast<double>(s->samples.size());
        for (const auto& w : s->samples)
            for (std::size_t i = 0; i < boxes.size(); ++i)
                if (boxes[i].contains(w.values)) {
                    out[i] += unit;
                    break;
                }
        return out;
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) out[i] = box_mass(post, boxes[i]);
    return out;
}

/// Posterior mass of a union of pairwise-disjoint boxes.
inline double mass_of_disjoint_union(const Posterior& post, std::span<const WeightBox> boxes) {
    double total = 0.0;
    for (double m : box_masses(post, boxes)) total += m;
    return std::clamp(total, 0.0, 1.0);
}

/// Per-output variance of the network output across the posterior. Sample
/// posteriors use every sample; Gaussian posteriors use `draws` samples.
/// Population convention (divide by the number of evaluations).
inline std::vector<double> predictive_variance(const Posterior& post, std::span<const double> x, Rng& rng,
                                               std::size_t draws = 100) {
    const auto& arch = architecture(post);
    std::vector<std::vector<double>> outs;
    if (const auto* s = std::get_if<SamplePosterior>(&post)) {
        for (const auto& w : s->samples) outs.push_back(forward(arch, w, x));
    } else {
        for (std::size_t i = 0; i < draws; ++i) outs.push_back(forward(arch, draw(post, rng), x));
    }
    const std::size_t n = arch.output_dim();
    std::vector<double> mean(n, 0.0), var(n, 0.0);
    if (outs.empty()) return var;
    const double m = static_cast<double>(outs.size());
    for (const auto& o : outs)
        for (std::size_t i = 0; i < n; ++i) mean[i] += o[i] / m;
    for (const auto& o : outs)
        for (std::size_t i = 0; i < n; ++i) var[i] += (o[i] - mean[i]) * (o[i] - mean[i]) / m;
    return var;
}

} // namespace reachcert

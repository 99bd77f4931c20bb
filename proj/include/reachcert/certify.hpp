#pragma once

// Backward recursion computing certified lower bounds K_k on the probability
// of reaching the goal while staying safe, per grid cell.

#include "reachcert/env.hpp"
#include "reachcert/grid.hpp"
#include "reachcert/interval.hpp"
#include "reachcert/parallel.hpp"
#include "reachcert/policy.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachcert {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct CertifyParams {
    std::size_t n_s = 250;
    /// Absolute weight-box half-width; when unset the half-width is
    /// rho_w_scale times the per-parameter posterior standard deviation.
    std::optional<double> rho_w;
    double rho_w_scale = 0.5;
    std::size_t n_p = 2;
    double eta = 0.99;
    /// Neighbourhood inflation per state dimension; defaults to one cell width.
    std::optional<std::vector<double>> rho_x;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    bool strict = false;

    void validate() const {
        if (n_s < 1) throw std::invalid_argument("n_s must be at least 1");
        if (rho_w && !(*rho_w > 0.0)) throw std::invalid_argument("rho_w must be positive");
        if (!rho_w && !(rho_w_scale > 0.0)) throw std::invalid_argument("rho_w_scale must be positive");
        if (n_p < 2) throw std::invalid_argument("n_p must be at least 2");
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    }
};

struct Metrics {
    double avg_lower_bound = 0.0;
    double coverage = 0.0;
};

struct CertificationResult {
    /// tables[k] holds K_k for k = 0..N; tables[N] is the goal indicator.
    std::vector<ValueTable> tables;
    std::vector<Label> labels;
    Metrics metrics;
    nlohmann::json provenance;

    const ValueTable& initial() const { return tables.front(); }
    std::size_t horizon() const { return tables.size() - 1; }
};

/// Greedy pass in input order: a box overlapping an already kept box is
/// dropped. The result is pairwise disjoint and its union lies inside the
/// input union.
inline std::vector<WeightBox> disjointify(const std::vector<WeightBox>& boxes) {
    std::vector<WeightBox> kept;
    for (const auto& b : boxes) {
        bool clash = false;
        for (const auto& k : kept)
            if (k.overlaps(b)) {
                clash = true;
                break;
            }
        if (!clash) kept.push_back(b);
    }
    return kept;
}

/// Mean K_0 over the non-unsafe cells and the fraction of them with K_0 > 0.
/// Goal cells count (with value 1), so a grid that is entirely goal scores 1.
inline Metrics compute_metrics(const ValueTable& k0, const std::vector<Label>& labels) {
    Metrics m;
    std::size_t n = 0, covered = 0;
    double sum = 0.0;
    for (std::size_t l = 0; l < labels.size(); ++l) {
        if (labels[l] == Label::unsafe) continue;
        ++n;
        sum += k0.values[l];
        if (k0.values[l] > 0.0) ++covered;
    }
    if (n > 0) {
        m.avg_lower_bound = sum / static_cast<double>(n);
        m.coverage = static_cast<double>(covered) / static_cast<double>(n);
    }
    return m;
}

/// Shared state for one certification sweep.
struct CertifyContext {
    const Posterior& posterior;
    const ReachAvoidSpec& spec;
    const GridSpec& grid;
    CertifyParams params;
    std::vector<Label> labels;
    std::vector<double> rho_w;
    std::vector<double> rho_x;
    double eps = 0.0;
    double eta_n = 1.0;

    CertifyContext(const Posterior& post, const ReachAvoidSpec& s, const GridSpec& g, const CertifyParams& p)
        : posterior(post), spec(s), grid(g), params(p) {
        params.validate();
        const auto& arch = architecture(post);
        if (g.position_dims() != s.dims()) throw ConfigError("grid and spec differ in position dimension");
        if (arch.output_dim() != g.dims()) throw ConfigError("dynamics model output does not match the grid dimension");
        labels = classify_cells(s, g);
        if (p.rho_w) {
            rho_w.assign(arch.n_params(), *p.rho_w);
        } else {
            rho_w = posterior_stddev(post);
            for (auto& r : rho_w) r *= p.rho_w_scale;
        }
        if (p.rho_x) {
            if (p.rho_x->size() != g.dims()) throw ConfigError("rho_x has the wrong dimension");
            rho_x = *p.rho_x;
        } else {
            rho_x = g.widths();
        }
        eps = s.sigma > 0.0 ? epsilon_for(p.eta, s.sigma) : 0.0;
        eta_n = std::pow(p.eta, static_cast<double>(g.dims()));
    }

    const Architecture& arch() const { return architecture(posterior); }

    Rng cell_rng(std::size_t k, std::size_t cell) const { return make_rng(params.seed, {k, cell}); }

    /// Reachable-set box for one weight box, noise margin included.
    Box image(const WeightBox& wbox, const Box& input) const {
        return add_noise_margin(ibp_weight_box(arch(), wbox, input), eps);
    }

    /// Certified one-step value of a cell whose inputs (state ++ action) lie
    /// in `input`, against K_{k+1} = next.
    double bound(const ValueTable& next, std::size_t cell, const Box& input, Rng& rng) const {
        const auto idx = cell_at(grid, cell).index;
        if (params.n_p == 2) {
            const double v1 = neighborhood_max(next, grid, idx, rho_x);
            if (v1 <= 0.0) return 0.0;
            std::vector<WeightBox> accepted;
            for (std::size_t s = 0; s < params.n_s; ++s) {
                const WeightSet w = draw(posterior, rng);
                WeightBox wb = WeightBox::around(w.values, rho_w);
                if (min_over_box(next, grid, image(wb, input)) >= v1) accepted.push_back(std::move(wb));
            }
            if (accepted.empty()) return 0.0;
            const auto boxes = disjointify(accepted);
            return std::clamp(v1 * eta_n * mass_of_disjoint_union(posterior, boxes), 0.0, 1.0);
        }
        // General binning: each box earns the lower endpoint of the bin its
        // worst-case successor value falls in.
        const double np = static_cast<double>(params.n_p);
        std::vector<WeightBox> boxes;
        std::vector<double> floors;
        for (std::size_t s = 0; s < params.n_s; ++s) {
            const WeightSet w = draw(posterior, rng);
            WeightBox wb = WeightBox::around(w.values, rho_w);
            const double m = min_over_box(next, grid, image(wb, input));
            double b = std::floor(m * np) / np;
            if (b > m) b -= 1.0 / np;
            if (b <= 0.0) continue;
            boxes.push_back(std::move(wb));
            floors.push_back(b);
        }
        std::vector<WeightBox> kept;
        std::vector<double> kept_floor;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            bool clash = false;
            for (const auto& k : kept)
                if (k.overlaps(boxes[i])) {
                    clash = true;
                    break;
                }
            if (!clash) {
                kept.push_back(boxes[i]);
                kept_floor.push_back(floors[i]);
            }
        }
        const auto masses = box_masses(posterior, kept);
        double total = 0.0;
        for (std::size_t i = 0; i < kept.size(); ++i) total += kept_floor[i] * masses[i];
        return std::clamp(eta_n * total, 0.0, 1.0);
    }
};

inline ValueTable goal_indicator(const std::vector<Label>& labels, std::size_t step) {
    ValueTable t{step, std::vector<double>(labels.size(), 0.0)};
    for (std::size_t l = 0; l < labels.size(); ++l)
        if (labels[l] == Label::goal) t.values[l] = 1.0;
    return t;
}

inline nlohmann::json to_json(const CertifyParams& p) {
    nlohmann::json j{{"n_s", p.n_s}, {"rho_w_scale", p.rho_w_scale}, {"n_p", p.n_p}, {"eta", p.eta}, {"seed", p.seed}};
    j["rho_w"] = p.rho_w ? nlohmann::json(*p.rho_w) : nlohmann::json(nullptr);
    j["rho_x"] = p.rho_x ? nlohmann::json(*p.rho_x) : nlohmann::json(nullptr);
    return j;
}

/// One backward step: K_k from K_{k+1} for the given policy.
inline ValueTable certify_step(const CertifyContext& ctx, const Policy& policy, const ValueTable& next, std::size_t k) {
    ValueTable out{k, std::vector<double>(ctx.grid.n_cells(), 0.0)};
    parallel_for(ctx.grid.n_cells(), ctx.params.workers, [&](std::size_t cell) {
        const Label lab = ctx.labels[cell];
        if (lab == Label::goal) {
            out.values[cell] = 1.0;
            return;
        }
        if (lab == Label::unsafe) return;
        const auto ab = action_box(policy, ctx.grid, cell, k);
        if (!ab) {
            if (ctx.params.strict)
                throw ConfigError("policy undefined on cell " + std::to_string(cell) + " at step " + std::to_string(k));
            return;
        }
        Rng rng = ctx.cell_rng(k, cell);
        out.values[cell] = ctx.bound(next, cell, cell_box(ctx.grid, cell).concat(*ab), rng);
    });
    return out;
}

/// Certified lower bounds K_0..K_N for `policy` over every grid cell.
inline CertificationResult run(const Posterior& posterior, const Policy& policy, const ReachAvoidSpec& spec,
                               const GridSpec& grid, const CertifyParams& params) {
    spec.validate();
    CertifyContext ctx(posterior, spec, grid, params);
    if (action_dim(policy) + grid.dims() != ctx.arch().input_dim())
        throw ConfigError("policy action dimension does not match the dynamics model");
    const std::size_t N = spec.horizon;
    CertificationResult res;
    res.labels = ctx.labels;
    res.tables.resize(N + 1);
    res.tables[N] = goal_indicator(ctx.labels, N);
    for (std::size_t k = N; k-- > 0;) res.tables[k] = certify_step(ctx, policy, res.tables[k + 1], k);
    res.metrics = compute_metrics(res.tables[0], res.labels);
    res.provenance = {{"params", to_json(params)}, {"epsilon", ctx.eps}, {"horizon", N}};
    return res;
}

struct InvarianceResult {
    /// Worst one-step bound over the frontier, per waypoint.
    std::vector<double> step_bounds;
    /// Product of the per-waypoint bounds.
    double total = 0.0;
    /// Per-waypoint one-step tables (values only on frontier cells).
    std::vector<CertificationResult> steps;
};

/// One-step reachability chained along a waypoint schedule. The frontier
/// starts at `start_cells`; for waypoint j every frontier cell gets a
/// one-step bound of reaching goal region j, and the next frontier is the set
/// of cells inside that region.
inline InvarianceResult forward_invariance(const Posterior& posterior, const Policy& policy, const ReachAvoidSpec& spec,
                                           const GridSpec& grid, const CertifyParams& params,
                                           const std::vector<Box>& waypoints, std::vector<std::size_t> start_cells) {
    InvarianceResult res;
    std::vector<std::size_t> frontier = std::move(start_cells);
    double total = 1.0;
    for (std::size_t j = 0; j < waypoints.size(); ++j) {
        ReachAvoidSpec sj = spec;
        sj.goal = waypoints[j];
        sj.horizon = 1;
        sj.validate();
        CertifyContext ctx(posterior, sj, grid, params);
        CertificationResult cr;
        cr.labels = ctx.labels;
        cr.tables = {ValueTable{0, std::vector<double>(grid.n_cells(), 0.0)}, goal_indicator(ctx.labels, 1)};
        double worst = frontier.empty() ? 0.0 : 1.0;
        for (auto cell : frontier) {
            const auto ab = action_box(policy, grid, cell, 0);
            double v = 0.0;
            if (ab) {
                Rng rng = make_rng(params.seed, {j, cell});
                v = ctx.bound(cr.tables[1], cell, cell_box(grid, cell).concat(*ab), rng);
            } else if (params.strict) {
                throw ConfigError("policy undefined on frontier cell " + std::to_string(cell));
            }
            cr.tables[0].values[cell] = v;
            worst = std::min(worst, v);
        }
        cr.metrics = compute_metrics(cr.tables[0], cr.labels);
        res.step_bounds.push_back(worst);
        res.steps.push_back(std::move(cr));
        total *= worst;
        frontier.clear();
        for (std::size_t l = 0; l < grid.n_cells(); ++l)
            if (ctx.labels[l] == Label::goal) frontier.push_back(l);
    }
    res.total = waypoints.empty() ? 0.0 : total;
    return res;
}

} // namespace reachcert

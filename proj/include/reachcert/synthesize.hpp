#pragma once

// Policy synthesis over a finite action grid: per cell and time step, pick
// the action with the best sampled successor value, then certify it.

#include "reachcert/certify.hpp"
#include "reachcert/grid.hpp"
#include "reachcert/interval.hpp"
#include "reachcert/parallel.hpp"
#include "reachcert/policy.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace reachcert {

/// Midpoints of t equal sub-intervals of [-1, 1] per action dimension,
/// enumerated lexicographically with dimension 0 varying slowest.
struct ActionGrid {
    std::size_t dims = 2;
    std::size_t t = 10;

    ActionGrid() = default;
    ActionGrid(std::size_t d, std::size_t per_dim) : dims(d), t(per_dim) {
        if (d == 0) throw std::invalid_argument("action grid needs at least one dimension");
        if (per_dim < 2) throw std::invalid_argument("action grid needs at least two values per dimension");
    }

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t i = 0; i < dims; ++i) n *= t;
        return n;
    }
    double midpoint(std::size_t j) const {
        return -1.0 + (2.0 * static_cast<double>(j) + 1.0) / static_cast<double>(t);
    }
    std::vector<double> operator[](std::size_t a) const {
        std::vector<double> u(dims);
        for (std::size_t i = dims; i-- > 0;) {
            u[i] = midpoint(a % t);
            a /= t;
        }
        return u;
    }
};

struct NeuralSynthesisConfig {
    std::size_t hidden = 36;
    double learning_rate = 0.00075;
    std::size_t epochs = 100;
    std::size_t n_states = 15000;
};

struct SynthesisConfig {
    std::size_t n_s = 250;
    double p_t = 0.9;
    double alpha = 0.25;
    double eps_robust = 0.025;
    NeuralSynthesisConfig nn;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_s < 1) throw std::invalid_argument("n_s must be at least 1");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
        if (!(p_t >= 0.0 && p_t <= 1.0)) throw std::invalid_argument("p_t must lie in [0, 1]");
        if (!(eps_robust >= 0.0)) throw std::invalid_argument("eps_robust must be non-negative");
    }
};

inline nlohmann::json to_json(const SynthesisConfig& c) {
    return {{"n_s", c.n_s},
            {"p_t", c.p_t},
            {"alpha", c.alpha},
            {"eps_robust", c.eps_robust},
            {"seed", c.seed},
            {"nn",
             {{"hidden", c.nn.hidden},
              {"learning_rate", c.nn.learning_rate},
              {"epochs", c.nn.epochs},
              {"n_states", c.nn.n_states}}}};
}

struct ActionChoice {
    std::vector<double> action;
    double estimate = -1.0;
    std::size_t index = 0;
};

/// Sampled search over the action grid for one cell. Each action scores the
/// mean, over n_s posterior draws, of the worst K_{k+1} value on the
/// propagated cell image (noise margin included). The same draws are used for
/// every action; ties go to the first action in enumeration order.
inline ActionChoice synth_action(const CertifyContext& ctx, std::size_t cell, const ValueTable& next,
                                 const ActionGrid& agrid, std::size_t n_s, Rng& rng) {
    const auto& arch = ctx.arch();
    const auto& l0 = arch.layer(0);
    const std::size_t sd = ctx.grid.dims();
    if (l0.in != sd + agrid.dims) throw ConfigError("action grid does not match the dynamics model");
    const Box cb = cell_box(ctx.grid, cell);

    std::vector<WeightSet> ws;
    ws.reserve(n_s);
    for (std::size_t s = 0; s < n_s; ++s) ws.push_back(draw(ctx.posterior, rng));

    // First-layer partial sums over the state inputs. Continuing the sums
    // with the action terms and then the bias reproduces ibp_fixed_weights
    // exactly.
    std::vector<std::vector<double>> part_lo(n_s), part_hi(n_s);
    for (std::size_t s = 0; s < n_s; ++s) {
        const double* W = ws[s].values.data() + l0.weight_offset;
        part_lo[s].assign(l0.out, 0.0);
        part_hi[s].assign(l0.out, 0.0);
        for (std::size_t r = 0; r < l0.out; ++r) {
            double slo = 0.0, shi = 0.0;
            for (std::size_t c = 0; c < sd; ++c) {
                const double p1 = W[r * l0.in + c] * cb[c].lo, p2 = W[r * l0.in + c] * cb[c].hi;
                slo += std::min(p1, p2);
                shi += std::max(p1, p2);
            }
            part_lo[s][r] = slo;
            part_hi[s][r] = shi;
        }
    }

    ActionChoice best;
    std::vector<double> lo, hi;
    for (std::size_t a = 0; a < agrid.size(); ++a) {
        const auto u = agrid[a];
        double total = 0.0;
        for (std::size_t s = 0; s < n_s; ++s) {
            const auto& w = ws[s].values;
            const double* W = w.data() + l0.weight_offset;
            lo.assign(l0.out, 0.0);
            hi.assign(l0.out, 0.0);
            for (std::size_t r = 0; r < l0.out; ++r) {
                double slo = part_lo[s][r], shi = part_hi[s][r];
                for (std::size_t c = 0; c < agrid.dims; ++c) {
                    const double p = W[r * l0.in + sd + c] * u[c];
                    slo += std::min(p, p);
                    shi += std::max(p, p);
                }
                slo += w[l0.bias_offset + r];
                shi += w[l0.bias_offset + r];
                lo[r] = slo;
                hi[r] = shi;
            }
            detail::activate_box(arch, 0, lo, hi);
            detail::ibp_fixed_layers(arch, w, 1, lo, hi);
            total += min_over_box(next, ctx.grid, add_noise_margin(detail::to_box(lo, hi), ctx.eps));
        }
        const double kappa = total / static_cast<double>(n_s);
        if (kappa > best.estimate) {
            best.estimate = kappa;
            best.action = u;
            best.index = a;
        }
    }
    return best;
}

struct SynthesisResult {
    TabularPolicy policy;
    CertificationResult certificate;
    /// estimates[k][cell]: sampled score of the chosen action (safe cells).
    std::vector<std::vector<double>> estimates;
};

/// Backward synthesis: at each step choose every safe cell's action against
/// K_{k+1}, then store the certified bound of that action. Certification uses
/// the same per-cell random streams as run(), so certifying the returned
/// policy reproduces the returned tables.
inline SynthesisResult max_cert(const Posterior& posterior, const ReachAvoidSpec& spec, const GridSpec& grid,
                                const ActionGrid& agrid, const CertifyParams& params, const SynthesisConfig& scfg) {
    spec.validate();
    scfg.validate();
    CertifyContext ctx(posterior, spec, grid, params);
    const std::size_t N = spec.horizon;
    SynthesisResult res;
    res.policy = TabularPolicy(grid, agrid.dims, N);
    auto& cert = res.certificate;
    cert.labels = ctx.labels;
    cert.tables.resize(N + 1);
    cert.tables[N] = goal_indicator(ctx.labels, N);
    res.estimates.assign(N, std::vector<double>(grid.n_cells(), 0.0));
    std::vector<std::vector<double>> chosen(grid.n_cells());

    for (std::size_t k = N; k-- > 0;) {
        const ValueTable& next = cert.tables[k + 1];
        ValueTable out{k, std::vector<double>(grid.n_cells(), 0.0)};
        parallel_for(grid.n_cells(), params.workers, [&](std::size_t cell) {
            const Label lab = ctx.labels[cell];
            if (lab == Label::goal) {
                out.values[cell] = 1.0;
                return;
            }
            if (lab == Label::unsafe) return;
            Rng srng = make_rng(scfg.seed, {k, cell, 0x53594eULL});
            auto choice = synth_action(ctx, cell, next, agrid, scfg.n_s, srng);
            Rng crng = ctx.cell_rng(k, cell);
            out.values[cell] = ctx.bound(next, cell, cell_box(grid, cell).concat(Box::point(choice.action)), crng);
            res.estimates[k][cell] = choice.estimate;
            chosen[cell] = std::move(choice.action);
        });
        for (std::size_t cell = 0; cell < grid.n_cells(); ++cell)
            if (ctx.labels[cell] == Label::safe) res.policy.set(k, cell, chosen[cell]);
        cert.tables[k] = std::move(out);
    }
    cert.metrics = compute_metrics(cert.tables[0], cert.labels);
    cert.provenance = {{"params", to_json(params)}, {"synthesis", to_json(scfg)}, {"epsilon", ctx.eps}, {"horizon", N}};
    return res;
}

} // namespace reachcert

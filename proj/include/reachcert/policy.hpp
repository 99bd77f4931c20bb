#pragma once

// Tabular and neural feedback policies, and their action bounds over cells.

#include "reachcert/env.hpp"
#include "reachcert/grid.hpp"
#include "reachcert/interval.hpp"
#include "reachcert/nn.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace reachcert {

struct PolicyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Per-cell actions on its own grid, optionally one table per time step.
/// Step k uses table k when it exists and table 0 otherwise.
struct TabularPolicy {
    GridSpec grid;
    std::size_t action_dim = 0;
    std::vector<std::vector<double>> tables;       // n_cells * action_dim each
    std::vector<std::vector<std::uint8_t>> defined; // n_cells each
    Interval action_bounds{-1.0, 1.0};
    bool strict = false;

    TabularPolicy() = default;
    TabularPolicy(GridSpec g, std::size_t adim, std::size_t n_tables = 1)
        : grid(std::move(g)), action_dim(adim),
          tables(n_tables, std::vector<double>(grid.n_cells() * adim, 0.0)),
          defined(n_tables, std::vector<std::uint8_t>(grid.n_cells(), 0)) {
        if (adim == 0 || n_tables == 0) throw std::invalid_argument("tabular policy needs actions and tables");
    }

    std::size_t n_tables() const { return tables.size(); }
    std::size_t table_for(std::size_t k) const { return k < tables.size() ? k : 0; }

    void set(std::size_t k, std::size_t cell, std::span<const double> u) {
        if (u.size() != action_dim) throw std::invalid_argument("action has the wrong dimension");
        auto& t = tables.at(k);
        for (std::size_t i = 0; i < action_dim; ++i)
            t[cell * action_dim + i] = std::clamp(u[i], action_bounds.lo, action_bounds.hi);
        defined.at(k).at(cell) = 1;
    }
    bool is_defined(std::size_t k, std::size_t cell) const { return defined[table_for(k)][cell] != 0; }
    std::span<const double> get(std::size_t k, std::size_t cell) const {
        return {tables[table_for(k)].data() + cell * action_dim, action_dim};
    }
};

/// Per-step networks pi_0 .. pi_{N-1}; a single network is shared by all
/// steps. Outputs are clamped to the action bounds.
struct NeuralPolicy {
    Architecture arch;
    std::vector<WeightSet> steps;
    Interval action_bounds{-1.0, 1.0};

    NeuralPolicy() = default;
    NeuralPolicy(Architecture a, std::vector<WeightSet> w) : arch(std::move(a)), steps(std::move(w)) {
        if (steps.empty()) throw std::invalid_argument("neural policy needs at least one network");
        for (const auto& s : steps)
            if (s.values.size() != arch.n_params()) throw std::invalid_argument("policy weights do not match architecture");
    }
    const WeightSet& at(std::size_t k) const { return steps[k < steps.size() ? k : 0]; }
};

using Policy = std::variant<TabularPolicy, NeuralPolicy>;

inline std::vector<double> action(const TabularPolicy& p, std::span<const double> x, std::size_t k) {
    const std::size_t l = locate(p.grid, x.first(std::min(x.size(), p.grid.dims())));
    if (l == exterior || !p.is_defined(k, l)) {
        if (p.strict) throw PolicyError("policy undefined at the requested state");
        return std::vector<double>(p.action_dim, 0.0);
    }
    const auto u = p.get(k, l);
    return {u.begin(), u.end()};
}

inline std::vector<double> action(const NeuralPolicy& p, std::span<const double> x, std::size_t k) {
    auto y = forward(p.arch, p.at(k), x);
    for (auto& v : y) v = std::clamp(v, p.action_bounds.lo, p.action_bounds.hi);
    return y;
}

inline std::vector<double> action(const Policy& p, std::span<const double> x, std::size_t k) {
    return std::visit([&](const auto& q) { return action(q, x, k); }, p);
}

inline std::size_t action_dim(const Policy& p) {
    if (const auto* t = std::get_if<TabularPolicy>(&p)) return t->action_dim;
    return std::get<NeuralPolicy>(p).arch.output_dim();
}

inline PolicyFn as_function(const Policy& p) {
    return [&p](std::span<const double> x, std::size_t k) { return action(p, x, k); };
}

/// Bound on the actions taken anywhere in `state_box` at step k; nullopt
/// when a tabular policy is undefined on part of the box.
inline std::optional<Box> action_box(const TabularPolicy& p, const GridSpec& g, std::size_t cell, std::size_t k) {
    if (p.grid == g) {
        if (!p.is_defined(k, cell)) return std::nullopt;
        return Box::point(p.get(k, cell));
    }
    // Different grids: hull of every policy cell the state cell touches.
    const Box b = cell_box(g, cell);
    const std::size_t n = p.grid.dims();
    if (b.size() < n) throw std::invalid_argument("policy grid has more dimensions than the state grid");
    std::vector<std::size_t> lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = detail::clip_coordinate(p.grid, i, b[i].lo);
        const double c = detail::clip_coordinate(p.grid, i, b[i].hi);
        if (!(a >= p.grid.lower(i) && c <= p.grid.upper(i))) return std::nullopt;
        lo[i] = detail::axis_index(p.grid, i, a);
        hi[i] = detail::axis_index(p.grid, i, c);
    }
    std::vector<double> ulo(p.action_dim, p.action_bounds.hi), uhi(p.action_dim, p.action_bounds.lo);
    bool ok = true;
    for_each_in_range(p.grid, lo, hi, [&](std::size_t l) {
        if (!p.is_defined(k, l)) {
            ok = false;
            return false;
        }
        const auto u = p.get(k, l);
        for (std::size_t i = 0; i < p.action_dim; ++i) {
            ulo[i] = std::min(ulo[i], u[i]);
            uhi[i] = std::max(uhi[i], u[i]);
        }
        return true;
    });
    if (!ok) return std::nullopt;
    return Box(ulo, uhi);
}

inline Box action_box(const NeuralPolicy& p, const Box& state_box, std::size_t k) {
    Box out = ibp_fixed_weights(p.arch, p.at(k), state_box);
    std::vector<Interval> d;
    for (const auto& iv : out)
        d.emplace_back(std::clamp(iv.lo, p.action_bounds.lo, p.action_bounds.hi),
                       std::clamp(iv.hi, p.action_bounds.lo, p.action_bounds.hi));
    return Box(std::move(d));
}

inline std::optional<Box> action_box(const Policy& p, const GridSpec& g, std::size_t cell, std::size_t k) {
    if (const auto* t = std::get_if<TabularPolicy>(&p)) return action_box(*t, g, cell, k);
    return action_box(std::get<NeuralPolicy>(p), cell_box(g, cell), k);
}

} // namespace reachcert

#pragma once

// Reference value functions for one-dimensional systems with a known
// transition law, integrated on a fine midpoint lattice. Used to check that
// certified bounds never exceed the true reach-avoid probability.

#include "reachcert/env.hpp"
#include "reachcert/grid.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>
#include <vector>

namespace reachcert {

/// P(x_{k+1} in [a, b] | x_k = x) under the closed-loop system.
using TransitionMass = std::function<double(double x, std::size_t k, double a, double b)>;

struct OracleResult {
    GridSpec lattice;                       // one quadrature point per cell centre
    std::vector<std::vector<double>> values; // values[k][i], k = 0..N

    /// V_k evaluated at an arbitrary state by one exact backward step from
    /// the lattice values of V_{k+1}; V_N is the goal indicator.
    double value_at(const ReachAvoidSpec& spec, const TransitionMass& mass, double x, std::size_t k) const;
};

namespace detail {

inline Label label_1d(const ReachAvoidSpec& spec, double x) {
    const std::vector<double> pt{x};
    return classify(spec, pt);
}

inline double oracle_step(const ReachAvoidSpec& spec, const GridSpec& lat, const TransitionMass& mass,
                          const std::vector<double>& next, double x, std::size_t k) {
    switch (label_1d(spec, x)) {
    case Label::goal: return 1.0;
    case Label::unsafe: return 0.0;
    case Label::safe: break;
    }
    double v = 0.0;
    for (std::size_t j = 0; j < lat.count(0); ++j)
        if (next[j] > 0.0) v += next[j] * mass(x, k, lat.edge(0, j), lat.edge(0, j + 1));
    return std::clamp(v, 0.0, 1.0);
}

} // namespace detail

inline double OracleResult::value_at(const ReachAvoidSpec& spec, const TransitionMass& mass, double x,
                                     std::size_t k) const {
    const std::size_t N = values.size() - 1;
    if (k >= N) {
        return detail::label_1d(spec, x) == Label::goal ? 1.0 : 0.0;
    }
    return detail::oracle_step(spec, lattice, mass, values[k + 1], x, k);
}

/// Backward recursion V_N = 1_G, V_k(x) = 1_G(x) + 1_S(x) E[V_{k+1}(x')],
/// with the expectation as a sum over `n_points` equal cells spanning the
/// workspace. Mass leaving the workspace counts as failure.
inline OracleResult exact_recursion_oracle(const TransitionMass& mass, const ReachAvoidSpec& spec,
                                           std::size_t n_points) {
    if (spec.dims() != 1) throw std::invalid_argument("the quadrature oracle handles one-dimensional systems");
    if (n_points < 2) throw std::invalid_argument("need at least two quadrature points");
    const double lo[1] = {spec.bounds[0].lo}, hi[1] = {spec.bounds[0].hi};
    const std::size_t cnt[1] = {n_points};
    OracleResult r{GridSpec::from_counts(lo, hi, cnt, 1), {}};
    const std::size_t N = spec.horizon;
    r.values.assign(N + 1, std::vector<double>(n_points, 0.0));
    for (std::size_t i = 0; i < n_points; ++i) {
        const double c = 0.5 * (r.lattice.edge(0, i) + r.lattice.edge(0, i + 1));
        r.values[N][i] = detail::label_1d(spec, c) == Label::goal ? 1.0 : 0.0;
    }
    for (std::size_t k = N; k-- > 0;)
        for (std::size_t i = 0; i < n_points; ++i) {
            const double c = 0.5 * (r.lattice.edge(0, i) + r.lattice.edge(0, i + 1));
            r.values[k][i] = detail::oracle_step(spec, r.lattice, mass, r.values[k + 1], c, k);
        }
    return r;
}

} // namespace reachcert

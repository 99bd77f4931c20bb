#pragma once

// Hyperrectangular partition of the state space, the cell-assignment map,
// per-cell labels and dense value tables.

#include "reachcert/env.hpp"
#include "reachcert/interval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachcert {

/// Regular grid: dimension i has counts[i] cells of width widths[i] starting
/// at lower[i]. The first `position_dims` coordinates are positions; the rest
/// are velocities and are clipped to `velocity_clip` before cell assignment.
class GridSpec {
public:
    GridSpec() = default;

    GridSpec(std::vector<double> lower, std::vector<double> widths, std::vector<std::size_t> counts,
             std::size_t position_dims, Interval velocity_clip = {-0.5, 0.1})
        : lower_(std::move(lower)), widths_(std::move(widths)), counts_(std::move(counts)),
          position_dims_(position_dims), clip_(velocity_clip) {
        const std::size_t n = lower_.size();
        if (n == 0 || widths_.size() != n || counts_.size() != n)
            throw std::invalid_argument("grid dimensions are inconsistent");
        if (position_dims_ == 0 || position_dims_ > n) throw std::invalid_argument("invalid position dimension count");
        for (std::size_t i = 0; i < n; ++i) {
            if (!(widths_[i] > 0.0) || !std::isfinite(widths_[i]) || !std::isfinite(lower_[i]))
                throw std::invalid_argument("grid widths must be positive and bounds finite");
            if (counts_[i] == 0) throw std::invalid_argument("grid needs at least one cell per dimension");
        }
        strides_.assign(n, 1);
        for (std::size_t i = n - 1; i > 0; --i) strides_[i - 1] = strides_[i] * counts_[i];
        n_cells_ = strides_[0] * counts_[0];
    }

    /// Covers [lower, upper] with cells of the given width. A range that is
    /// not an integer multiple of the width is rounded up and the upper bound
    /// extended.
    static GridSpec from_widths(std::span<const double> lower, std::span<const double> upper,
                                std::span<const double> widths, std::size_t position_dims,
                                Interval velocity_clip = {-0.5, 0.1}) {
        if (lower.size() != upper.size() || lower.size() != widths.size())
            throw std::invalid_argument("grid bounds and widths differ in dimension");
        std::vector<std::size_t> counts(lower.size());
        for (std::size_t i = 0; i < lower.size(); ++i) {
            if (!(upper[i] > lower[i]) || !(widths[i] > 0.0)) throw std::invalid_argument("invalid grid extent");
            const double r = (upper[i] - lower[i]) / widths[i];
            counts[i] = static_cast<std::size_t>(std::max(1.0, std::ceil(r - 1e-9)));
        }
        return GridSpec({lower.begin(), lower.end()}, {widths.begin(), widths.end()}, std::move(counts), position_dims,
                        velocity_clip);
    }

    /// Splits [lower, upper] into the given number of equal cells.
    static GridSpec from_counts(std::span<const double> lower, std::span<const double> upper,
                                std::span<const std::size_t> counts, std::size_t position_dims,
                                Interval velocity_clip = {-0.5, 0.1}) {
        if (lower.size() != upper.size() || lower.size() != counts.size())
            throw std::invalid_argument("grid bounds and counts differ in dimension");
        std::vector<double> w(lower.size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!(upper[i] > lower[i]) || counts[i] == 0) throw std::invalid_argument("invalid grid extent");
            w[i] = (upper[i] - lower[i]) / static_cast<double>(counts[i]);
        }
        return GridSpec({lower.begin(), lower.end()}, std::move(w), {counts.begin(), counts.end()}, position_dims,
                        velocity_clip);
    }

    /// Position grid over the spec bounds plus velocity dimensions over the
    /// clip range.
    static GridSpec for_spec(const ReachAvoidSpec& spec, std::span<const std::size_t> counts) {
        const std::size_t d = spec.dims();
        if (counts.size() != d && counts.size() != 2 * d)
            throw std::invalid_argument("grid counts must cover the positions or the full state");
        std::vector<double> lo, hi;
        for (std::size_t i = 0; i < counts.size(); ++i) {
            const Interval r = i < d ? spec.bounds[i] : spec.velocity_clip;
            lo.push_back(r.lo);
            hi.push_back(r.hi);
        }
        return from_counts(lo, hi, counts, d, spec.velocity_clip);
    }

    static GridSpec for_spec_widths(const ReachAvoidSpec& spec, double position_width, double velocity_width) {
        const std::size_t d = spec.dims();
        std::vector<double> lo, hi, w;
        for (std::size_t i = 0; i < 2 * d; ++i) {
            const Interval r = i < d ? spec.bounds[i] : spec.velocity_clip;
            lo.push_back(r.lo);
            hi.push_back(r.hi);
            w.push_back(i < d ? position_width : velocity_width);
        }
        return from_widths(lo, hi, w, d, spec.velocity_clip);
    }

    std::size_t dims() const { return lower_.size(); }
    std::size_t position_dims() const { return position_dims_; }
    const Interval& velocity_clip() const { return clip_; }
    std::size_t n_cells() const { return n_cells_; }
    const std::vector<double>& lower() const { return lower_; }
    const std::vector<double>& widths() const { return widths_; }
    const std::vector<std::size_t>& counts() const { return counts_; }
    double lower(std::size_t i) const { return lower_[i]; }
    double width(std::size_t i) const { return widths_[i]; }
    std::size_t count(std::size_t i) const { return counts_[i]; }
    double edge(std::size_t i, std::size_t j) const { return lower_[i] + static_cast<double>(j) * widths_[i]; }
    double upper(std::size_t i) const { return edge(i, counts_[i]); }
    std::size_t stride(std::size_t i) const { return strides_[i]; }

    bool operator==(const GridSpec& o) const {
        return lower_ == o.lower_ && widths_ == o.widths_ && counts_ == o.counts_ &&
               position_dims_ == o.position_dims_ && clip_ == o.clip_;
    }

private:
    std::vector<double> lower_, widths_;
    std::vector<std::size_t> counts_, strides_;
    std::size_t position_dims_ = 0;
    Interval clip_{-0.5, 0.1};
    std::size_t n_cells_ = 0;
};

inline constexpr std::size_t exterior = std::numeric_limits<std::size_t>::max();

/// A grid cell; `index` is empty for the exterior sentinel.
struct Cell {
    std::vector<std::size_t> index;
    bool is_exterior() const { return index.empty(); }
    bool operator==(const Cell&) const = default;
};

inline std::size_t linear_index(const GridSpec& g, std::span<const std::size_t> idx) {
    if (idx.size() != g.dims()) throw std::invalid_argument("cell index has the wrong dimension");
    std::size_t l = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= g.count(i)) throw std::out_of_range("cell index outside the grid");
        l += idx[i] * g.stride(i);
    }
    return l;
}

inline Cell cell_at(const GridSpec& g, std::size_t linear) {
    if (linear >= g.n_cells()) throw std::out_of_range("linear cell index outside the grid");
    Cell c;
    c.index.resize(g.dims());
    for (std::size_t i = 0; i < g.dims(); ++i) {
        c.index[i] = linear / g.stride(i);
        linear %= g.stride(i);
    }
    return c;
}

namespace detail {

/// Cell index of coordinate v in dimension i, assuming lower <= v <= upper.
/// Half-open cells; the top boundary belongs to the last cell.
inline std::size_t axis_index(const GridSpec& g, std::size_t i, double v) {
    const std::size_t n = g.count(i);
    double f = std::floor((v - g.lower(i)) / g.width(i));
    std::size_t j = f <= 0.0 ? 0 : std::min(n - 1, static_cast<std::size_t>(f));
    while (j > 0 && v < g.edge(i, j)) --j;
    while (j + 1 < n && v >= g.edge(i, j + 1)) ++j;
    return j;
}

inline double clip_coordinate(const GridSpec& g, std::size_t i, double v) {
    if (i < g.position_dims()) return v;
    v = std::clamp(v, g.velocity_clip().lo, g.velocity_clip().hi);
    return std::clamp(v, g.lower(i), g.upper(i));
}

} // namespace detail

/// Linear index of the cell containing x, or `exterior` when a position
/// coordinate lies outside the grid. Velocities are clipped first.
inline std::size_t locate(const GridSpec& g, std::span<const double> x) {
    if (x.size() != g.dims()) throw std::invalid_argument("state has the wrong dimension for the grid");
    std::size_t l = 0;
    for (std::size_t i = 0; i < g.dims(); ++i) {
        const double v = detail::clip_coordinate(g, i, x[i]);
        if (!(v >= g.lower(i) && v <= g.upper(i))) return exterior;
        l += detail::axis_index(g, i, v) * g.stride(i);
    }
    return l;
}

/// The cell-assignment map.
inline Cell z(const GridSpec& g, std::span<const double> x) {
    const std::size_t l = locate(g, x);
    return l == exterior ? Cell{} : cell_at(g, l);
}

inline Box cell_box(const GridSpec& g, std::span<const std::size_t> idx) {
    if (idx.size() != g.dims()) throw std::invalid_argument("exterior cell has no box");
    std::vector<Interval> d(g.dims());
    for (std::size_t i = 0; i < g.dims(); ++i) {
        if (idx[i] >= g.count(i)) throw std::out_of_range("cell index outside the grid");
        d[i] = Interval(g.edge(i, idx[i]), g.edge(i, idx[i] + 1));
    }
    return Box(std::move(d));
}

inline Box cell_box(const GridSpec& g, const Cell& c) { return cell_box(g, c.index); }
inline Box cell_box(const GridSpec& g, std::size_t linear) { return cell_box(g, cell_at(g, linear).index); }

inline std::vector<double> cell_center(const GridSpec& g, std::size_t linear) { return cell_box(g, linear).center(); }

/// Probabilities K_k over the cells of a grid.
struct ValueTable {
    std::size_t step = 0;
    std::vector<double> values;

    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
    bool operator==(const ValueTable&) const = default;
};

/// Calls fn(linear index) for every cell in the index ranges [lo[i], hi[i]].
template <class Fn>
void for_each_in_range(const GridSpec& g, std::span<const std::size_t> lo, std::span<const std::size_t> hi, Fn&& fn) {
    const std::size_t n = g.dims();
    std::vector<std::size_t> idx(lo.begin(), lo.end());
    for (;;) {
        std::size_t l = 0;
        for (std::size_t i = 0; i < n; ++i) l += idx[i] * g.stride(i);
        if (!fn(l)) return;
        std::size_t i = n;
        while (i > 0) {
            --i;
            if (idx[i] < hi[i]) {
                ++idx[i];
                break;
            }
            idx[i] = lo[i];
            if (i == 0) return;
        }
    }
}

/// Largest value over the cells meeting the cell box inflated by rho[i] per
/// dimension. A neighbour counts when the open inflated box overlaps it, so
/// rho = 0 yields the cell alone and rho = one width its direct neighbours.
inline double neighborhood_max(const ValueTable& t, const GridSpec& g, std::span<const std::size_t> cell,
                               std::span<const double> rho) {
    if (rho.size() != g.dims()) throw std::invalid_argument("rho_x has the wrong dimension");
    std::vector<std::size_t> lo(g.dims()), hi(g.dims());
    for (std::size_t i = 0; i < g.dims(); ++i) {
        if (!(rho[i] >= 0.0)) throw std::invalid_argument("rho_x must be non-negative");
        // Tolerance keeps an exact multiple of the width from picking up an
        // extra ring of cells through rounding.
        const double tol = 1e-9 * g.width(i);
        const double a = g.edge(i, cell[i]) - rho[i] + tol;
        const double b = g.edge(i, cell[i] + 1) + rho[i] - tol;
        std::size_t j0 = cell[i], j1 = cell[i];
        while (j0 > 0 && g.edge(i, j0) > a) --j0;
        while (j1 + 1 < g.count(i) && g.edge(i, j1 + 1) < b) ++j1;
        lo[i] = j0;
        hi[i] = j1;
    }
    double m = 0.0;
    for_each_in_range(g, lo, hi, [&](std::size_t l) {
        m = std::max(m, t.values[l]);
        return m < 1.0;
    });
    return m;
}

inline double neighborhood_max(const ValueTable& t, const GridSpec& g, std::span<const std::size_t> cell,
                               double rho) {
    std::vector<double> r(g.dims(), rho);
    return neighborhood_max(t, g, cell, r);
}

/// Smallest value over every cell the closed box touches; 0 when the box
/// leaves the grid in a position coordinate. Velocity ranges are clipped.
inline double min_over_box(const ValueTable& t, const GridSpec& g, const Box& xbox) {
    if (xbox.size() != g.dims()) throw std::invalid_argument("box has the wrong dimension for the grid");
    std::vector<std::size_t> lo(g.dims()), hi(g.dims());
    for (std::size_t i = 0; i < g.dims(); ++i) {
        const double a = detail::clip_coordinate(g, i, xbox[i].lo);
        const double b = detail::clip_coordinate(g, i, xbox[i].hi);
        if (!(a >= g.lower(i) && b <= g.upper(i))) return 0.0;
        lo[i] = detail::axis_index(g, i, a);
        hi[i] = detail::axis_index(g, i, b);
    }
    double m = 1.0;
    for_each_in_range(g, lo, hi, [&](std::size_t l) {
        m = std::min(m, t.values[l]);
        return m > 0.0;
    });
    return m;
}

/// Position projection of a cell box.
inline Box position_box(const GridSpec& g, const Box& b) {
    return Box(std::vector<Interval>(b.dims().begin(), b.dims().begin() + static_cast<std::ptrdiff_t>(g.position_dims())));
}

/// Goal only when the whole position projection lies in G; unsafe when it
/// meets an obstacle or leaves the workspace. Containment ignores rounding
/// of the grid edges (1e-9 of a cell width); obstacle contact does not.
inline Label classify_cell(const ReachAvoidSpec& spec, const GridSpec& g, std::size_t linear) {
    if (g.position_dims() != spec.dims()) throw std::invalid_argument("grid and spec differ in position dimension");
    const Box p = position_box(g, cell_box(g, linear));
    Box inner = p;
    for (std::size_t i = 0; i < inner.size(); ++i) {
        const double t = 1e-9 * g.width(i);
        inner[i] = Interval(p[i].lo + t, p[i].hi - t);
    }
    if (!spec.bounds.contains(inner)) return Label::unsafe;
    if (spec.goal.contains(inner)) return Label::goal;
    for (const auto& o : spec.obstacles)
        if (obstacle_intersects(o, p)) return Label::unsafe;
    return Label::safe;
}

inline std::vector<Label> classify_cells(const ReachAvoidSpec& spec, const GridSpec& g) {
    std::vector<Label> out(g.n_cells());
    for (std::size_t l = 0; l < out.size(); ++l) out[l] = classify_cell(spec, g, l);
    return out;
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const GridSpec& g) {
    return {{"lower", g.lower()},
            {"widths", g.widths()},
            {"counts", g.counts()},
            {"position_dims", g.position_dims()},
            {"velocity_clip", {g.velocity_clip().lo, g.velocity_clip().hi}}};
}

inline GridSpec grid_from_json(const nlohmann::json& j) {
    const auto clip = j.at("velocity_clip").get<std::vector<double>>();
    if (clip.size() != 2) throw std::invalid_argument("velocity_clip must have two entries");
    return GridSpec(j.at("lower").get<std::vector<double>>(), j.at("widths").get<std::vector<double>>(),
                    j.at("counts").get<std::vector<std::size_t>>(), j.at("position_dims").get<std::size_t>(),
                    Interval(clip[0], clip[1]));
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

/// One row per cell: index tuple, cell centre, probability.
inline void write_table_csv(std::ostream& os, const GridSpec& g, const ValueTable& t) {
    for (std::size_t i = 0; i < g.dims(); ++i) os << 'i' << i << ',';
    for (std::size_t i = 0; i < g.dims(); ++i) os << 'c' << i << ',';
    os << "probability\n";
    for (std::size_t l = 0; l < g.n_cells(); ++l) {
        const auto c = cell_at(g, l);
        const auto ctr = cell_center(g, l);
        for (auto v : c.index) os << v << ',';
        for (auto v : ctr) os << format_double(v) << ',';
        os << format_double(t.values[l]) << '\n';
    }
}

} // namespace reachcert

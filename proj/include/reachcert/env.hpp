#pragma once

// Planar puck dynamics, obstacle geometry, reach-avoid specifications and
// trajectory simulation under the true system or a BNN model.

#include "reachcert/interval.hpp"
#include "reachcert/nn.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace reachcert {

/// Double-integrator puck with linear friction, discretised with step h.
/// State is (position[d], velocity[d]); action is a force in [-1, 1]^d.
struct PuckParams {
    double h = 0.35;
    double m = 5.0;
    double eta_f = 1.0;
    std::size_t dims = 2;

    void validate() const {
        if (!(h > 0.0) || !(m > 0.0) || !(eta_f >= 0.0) || dims < 2)
            throw std::invalid_argument("invalid puck parameters");
    }
    std::size_t state_dim() const { return 2 * dims; }
    std::size_t action_dim() const { return dims; }
};

/// A·x + B·u with A = [[I, hI], [0, (1 - h·eta_f/m)I]], B = [0; (h/m)I].
inline std::vector<double> true_step(const PuckParams& p, std::span<const double> x, std::span<const double> u) {
    if (x.size() != p.state_dim() || u.size() != p.action_dim())
        throw std::invalid_argument("puck state or action has the wrong dimension");
    const std::size_t d = p.dims;
    const double decay = 1.0 - p.h * p.eta_f / p.m;
    const double gain = p.h / p.m;
    std::vector<double> y(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        y[i] = x[i] + p.h * x[d + i];
        y[d + i] = decay * x[d + i] + gain * u[i];
    }
    return y;
}

inline std::vector<double> true_step(const PuckParams& p, std::span<const double> x, std::span<const double> u,
                                     Rng& rng, double sigma) {
    auto y = true_step(p, x, u);
    if (sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& v : y) v += noise(rng);
    }
    return y;
}

// ---------------------------------------------------------------------------
// Geometry

/// Closed convex obstacle over the position coordinates: an axis-aligned
/// rectangle (any dimension) or a planar triangle.
struct Obstacle {
    enum class Kind { rect, tri };
    Kind kind = Kind::rect;
    Box rect;                                 // rect
    std::array<std::array<double, 2>, 3> tri{}; // tri vertices

    static Obstacle rectangle(Box b) {
        Obstacle o;
        o.kind = Kind::rect;
        o.rect = std::move(b);
        return o;
    }
    static Obstacle triangle(std::array<std::array<double, 2>, 3> v) {
        const double area = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        if (area == 0.0) throw std::invalid_argument("degenerate triangle obstacle");
        Obstacle o;
        o.kind = Kind::tri;
        o.tri = v;
        return o;
    }
    bool operator==(const Obstacle& o) const {
        return kind == o.kind && (kind == Kind::rect ? rect == o.rect : tri == o.tri);
    }
};

namespace detail {

inline double cross2(const std::array<double, 2>& a, const std::array<double, 2>& b, double px, double py) {
    return (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
}

inline bool point_in_triangle(const std::array<std::array<double, 2>, 3>& t, double x, double y) {
    const double c0 = cross2(t[0], t[1], x, y);
    const double c1 = cross2(t[1], t[2], x, y);
    const double c2 = cross2(t[2], t[0], x, y);
    const bool neg = c0 < 0.0 || c1 < 0.0 || c2 < 0.0;
    const bool pos = c0 > 0.0 || c1 > 0.0 || c2 > 0.0;
    return !(neg && pos);
}

/// Separating-axis test between a closed triangle and a closed rectangle.
inline bool triangle_intersects_rect(const std::array<std::array<double, 2>, 3>& t, const Interval& bx,
                                     const Interval& by) {
    double tx0 = t[0][0], tx1 = t[0][0], ty0 = t[0][1], ty1 = t[0][1];
    for (const auto& v : t) {
        tx0 = std::min(tx0, v[0]);
        tx1 = std::max(tx1, v[0]);
        ty0 = std::min(ty0, v[1]);
        ty1 = std::max(ty1, v[1]);
    }
    if (tx1 < bx.lo || bx.hi < tx0 || ty1 < by.lo || by.hi < ty0) return false;
    const std::array<std::array<double, 2>, 4> corners{
        {{bx.lo, by.lo}, {bx.hi, by.lo}, {bx.hi, by.hi}, {bx.lo, by.hi}}};
    for (int e = 0; e < 3; ++e) {
        const auto& a = t[e];
        const auto& b = t[(e + 1) % 3];
        const double nx = -(b[1] - a[1]), ny = b[0] - a[0];
        double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
        for (const auto& v : t) {
            const double s = nx * v[0] + ny * v[1];
            tmin = std::min(tmin, s);
            tmax = std::max(tmax, s);
        }
        double rmin = std::numeric_limits<double>::infinity(), rmax = -rmin;
        for (const auto& c : corners) {
            const double s = nx * c[0] + ny * c[1];
            rmin = std::min(rmin, s);
            rmax = std::max(rmax, s);
        }
        if (tmax < rmin || rmax < tmin) return false;
    }
    return true;
}

inline double segment_distance(const std::array<double, 2>& a, const std::array<double, 2>& b, double x, double y) {
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((x - a[0]) * dx + (y - a[1]) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a[0] + t * dx - x, ey = a[1] + t * dy - y;
    return std::sqrt(ex * ex + ey * ey);
}

} // namespace detail

inline bool obstacle_contains(const Obstacle& o, std::span<const double> pos) {
    if (o.kind == Obstacle::Kind::rect) {
        for (std::size_t i = 0; i < o.rect.size(); ++i)
            if (!o.rect[i].contains(pos[i])) return false;
        return true;
    }
    return detail::point_in_triangle(o.tri, pos[0], pos[1]);
}

/// Closed intersection test against a position box.
inline bool obstacle_intersects(const Obstacle& o, const Box& pos_box) {
    if (o.kind == Obstacle::Kind::rect) {
        for (std::size_t i = 0; i < o.rect.size(); ++i)
            if (!o.rect[i].intersects(pos_box[i])) return false;
        return true;
    }
    return detail::triangle_intersects_rect(o.tri, pos_box[0], pos_box[1]);
}

/// Euclidean distance from a position to the obstacle (0 inside).
inline double obstacle_distance(const Obstacle& o, std::span<const double> pos) {
    if (obstacle_contains(o, pos)) return 0.0;
    if (o.kind == Obstacle::Kind::rect) {
        double s = 0.0;
        for (std::size_t i = 0; i < o.rect.size(); ++i) {
            const double e = std::max({o.rect[i].lo - pos[i], 0.0, pos[i] - o.rect[i].hi});
            s += e * e;
        }
        return std::sqrt(s);
    }
    double m = std::numeric_limits<double>::infinity();
    for (int e = 0; e < 3; ++e) m = std::min(m, detail::segment_distance(o.tri[e], o.tri[(e + 1) % 3], pos[0], pos[1]));
    return m;
}

// ---------------------------------------------------------------------------
// Specification

enum class Label { goal, safe, unsafe };

inline std::string_view to_string(Label l) {
    switch (l) {
    case Label::goal: return "goal";
    case Label::safe: return "safe";
    case Label::unsafe: return "unsafe";
    }
    return "?";
}

/// Reach G within N steps while staying inside `bounds` and out of every
/// obstacle. Boxes range over the d position coordinates.
struct ReachAvoidSpec {
    Box bounds;
    Box goal;
    std::vector<Obstacle> obstacles;
    Interval velocity_clip{-0.5, 0.1};
    std::size_t horizon = 5;
    double sigma = 0.01;
    double eta = 0.99;
    std::vector<double> start; // full state; used for deployment rollouts

    /// Number of position coordinates; any further state coordinates are
    /// velocities.
    std::size_t dims() const { return bounds.size(); }

    void validate() const {
        if (bounds.empty() || goal.size() != bounds.size())
            throw std::invalid_argument("spec bounds and goal must share a dimension");
        if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
        if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
        for (const auto& o : obstacles) {
            if (o.kind == Obstacle::Kind::rect && o.rect.size() != dims())
                throw std::invalid_argument("rectangle obstacle has the wrong dimension");
            if (o.kind == Obstacle::Kind::tri && dims() != 2)
                throw std::invalid_argument("triangle obstacles need a planar workspace");
            if (obstacle_intersects(o, goal)) throw std::invalid_argument("goal region intersects an obstacle");
        }
        if (!start.empty() && start.size() < dims()) throw std::invalid_argument("start state has the wrong dimension");
    }
};

inline bool in_bounds(const ReachAvoidSpec& spec, std::span<const double> x) {
    for (std::size_t i = 0; i < spec.dims(); ++i)
        if (!spec.bounds[i].contains(x[i])) return false;
    return true;
}

inline bool in_goal(const ReachAvoidSpec& spec, std::span<const double> x) {
    for (std::size_t i = 0; i < spec.dims(); ++i)
        if (!spec.goal[i].contains(x[i])) return false;
    return true;
}

inline bool in_obstacle(const ReachAvoidSpec& spec, std::span<const double> x) {
    for (const auto& o : spec.obstacles)
        if (obstacle_contains(o, x.first(spec.dims()))) return true;
    return false;
}

/// Label of a state by its position (the first d coordinates).
inline Label classify(const ReachAvoidSpec& spec, std::span<const double> x) {
    if (!in_bounds(spec, x)) return Label::unsafe;
    if (in_goal(spec, x)) return Label::goal;
    if (in_obstacle(spec, x)) return Label::unsafe;
    return Label::safe;
}

inline void clip_velocity(const ReachAvoidSpec& spec, std::span<double> x) {
    for (std::size_t i = spec.dims(); i < x.size(); ++i)
        x[i] = std::clamp(x[i], spec.velocity_clip.lo, spec.velocity_clip.hi);
}

inline double nearest_obstacle_distance(const ReachAvoidSpec& spec, std::span<const double> x) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& o : spec.obstacles) m = std::min(m, obstacle_distance(o, x.first(spec.dims())));
    return m;
}

// ---------------------------------------------------------------------------
// Simulation

enum class Outcome { reached, collided, out_of_bounds, timeout };

inline std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::reached: return "reached";
    case Outcome::collided: return "collided";
    case Outcome::out_of_bounds: return "out_of_bounds";
    case Outcome::timeout: return "timeout";
    }
    return "?";
}

struct Trajectory {
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> actions;
    Outcome outcome = Outcome::timeout;
};

using PolicyFn = std::function<std::vector<double>(std::span<const double> x, std::size_t k)>;

struct TrueStepper {
    PuckParams params;
};

/// Draws a fresh weight set from the posterior at every step.
struct BnnStepper {
    const Posterior* posterior = nullptr;
};

using Stepper = std::variant<TrueStepper, BnnStepper>;

/// One noisy step of the chosen model, velocities clipped afterwards.
inline std::vector<double> step(const ReachAvoidSpec& spec, const Stepper& stepper, std::span<const double> x,
                                std::span<const double> u, Rng& rng) {
    std::vector<double> y;
    if (const auto* t = std::get_if<TrueStepper>(&stepper)) {
        y = true_step(t->params, x, u);
    } else {
        const auto& post = *std::get<BnnStepper>(stepper).posterior;
        std::vector<double> in(x.begin(), x.end());
        in.insert(in.end(), u.begin(), u.end());
        y = forward(architecture(post), draw(post, rng), in);
    }
    if (spec.sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, spec.sigma);
        for (auto& v : y) v += noise(rng);
    }
    clip_velocity(spec, y);
    return y;
}

inline Outcome terminal_outcome(const ReachAvoidSpec& spec, std::span<const double> x) {
    if (!in_bounds(spec, x)) return Outcome::out_of_bounds;
    if (in_goal(spec, x)) return Outcome::reached;
    if (in_obstacle(spec, x)) return Outcome::collided;
    return Outcome::timeout;
}

/// Rolls forward for at most spec.horizon steps, stopping at the first goal
/// or unsafe state.
inline Trajectory simulate(const ReachAvoidSpec& spec, const Stepper& stepper, const PolicyFn& policy,
                           std::span<const double> x0, Rng& rng) {
    Trajectory tr;
    tr.states.emplace_back(x0.begin(), x0.end());
    Outcome o = terminal_outcome(spec, x0);
    for (std::size_t k = 0; k < spec.horizon && o == Outcome::timeout; ++k) {
        auto u = policy(tr.states.back(), k);
        auto y = step(spec, stepper, tr.states.back(), u, rng);
        tr.actions.push_back(std::move(u));
        tr.states.push_back(std::move(y));
        o = terminal_outcome(spec, tr.states.back());
    }
    tr.outcome = o;
    return tr;
}

/// Fraction of `n` rollouts from x0 that reach the goal.
inline double success_rate(const ReachAvoidSpec& spec, const Stepper& stepper, const PolicyFn& policy,
                           std::span<const double> x0, std::size_t n, Rng& rng) {
    if (n == 0) throw std::invalid_argument("need at least one trajectory");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (simulate(spec, stepper, policy, x0, rng).outcome == Outcome::reached) ++hits;
    return static_cast<double>(hits) / static_cast<double>(n);
}

struct EpisodeConfig {
    std::size_t n_trajectories = 20;
    std::size_t max_horizon = 25;
    bool random = true; // random safe starts and random actions
};

/// Uniform random safe state (velocities uniform over the clip range).
inline std::vector<double> random_safe_state(const ReachAvoidSpec& spec, Rng& rng) {
    const std::size_t d = spec.dims();
    std::vector<double> x(2 * d);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        for (std::size_t i = 0; i < d; ++i)
            x[i] = std::uniform_real_distribution<double>(spec.bounds[i].lo, spec.bounds[i].hi)(rng);
        if (classify(spec, x) == Label::safe) break;
    }
    for (std::size_t i = d; i < 2 * d; ++i)
        x[i] = std::uniform_real_distribution<double>(spec.velocity_clip.lo, spec.velocity_clip.hi)(rng);
    return x;
}

/// (state ++ action) -> next-state rows from noisy true-dynamics rollouts.
/// Targets are the unclipped model outputs; the state carried forward is
/// clipped. Rollouts stop when they leave the safe set.
inline Dataset collect_episode(const ReachAvoidSpec& spec, const PuckParams& params, const PolicyFn& policy,
                               const EpisodeConfig& cfg, Rng& rng) {
    const std::size_t d = params.dims;
    Dataset data(3 * d, 2 * d);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> in(3 * d);
    for (std::size_t t = 0; t < cfg.n_trajectories; ++t) {
        std::vector<double> x = (cfg.random || spec.start.empty()) ? random_safe_state(spec, rng) : spec.start;
        for (std::size_t k = 0; k < cfg.max_horizon; ++k) {
            std::vector<double> u(d);
            if (cfg.random || !policy) {
                for (auto& v : u) v = unit(rng);
            } else {
                u = policy(x, k);
            }
            auto y = true_step(params, x, u, rng, spec.sigma);
            std::copy(x.begin(), x.end(), in.begin());
            std::copy(u.begin(), u.end(), in.begin() + static_cast<std::ptrdiff_t>(2 * d));
            data.add(in, y);
            clip_velocity(spec, y);
            x = std::move(y);
            if (classify(spec, x) != Label::safe) break;
        }
    }
    return data;
}

} // namespace reachcert

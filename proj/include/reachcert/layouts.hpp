#pragma once

// Obstacle layouts and reach-avoid specifications from JSON. The built-in
// layouts mirror the files under layouts/ and are approximate renditions of
// the benchmark maps (coordinates chosen by eye, workspace [0,1]^2).
//
// Schema (version 1):
//   {"version": 1, "name": str,
//    "bounds": {"lo": [..], "hi": [..]}, "goal": {"lo": [..], "hi": [..]},
//    "obstacles": [{"type": "rect", "coords": [lo, hi]} |
//                  {"type": "tri",  "coords": [[x, y], [x, y], [x, y]]}],
//    "velocity_clip": [lo, hi], "start": [state], "horizon": N,
//    "sigma": noise std, "eta": confidence}

#include "reachcert/env.hpp"
#include "reachcert/interval.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reachcert {

namespace layouts {

inline constexpr std::string_view v1 = R"json({
  "version": 1,
  "name": "v1",
  "bounds": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
  "goal": {"lo": [0.0, 0.0], "hi": [0.3, 0.3]},
  "obstacles": [
    {"type": "rect", "coords": [[0.4, 0.4], [0.6, 0.6]]}
  ],
  "velocity_clip": [-0.5, 0.1],
  "start": [0.9, 0.9, 0.0, 0.0],
  "horizon": 10,
  "sigma": 0.01,
  "eta": 0.99
}
)json";

inline constexpr std::string_view v2 = R"json({
  "version": 1,
  "name": "v2",
  "bounds": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
  "goal": {"lo": [0.0, 0.0], "hi": [0.25, 0.25]},
  "obstacles": [
    {"type": "rect", "coords": [[0.25, 0.45], [0.45, 0.7]]},
    {"type": "rect", "coords": [[0.55, 0.2], [0.8, 0.4]]}
  ],
  "velocity_clip": [-0.5, 0.1],
  "start": [0.9, 0.9, 0.0, 0.0],
  "horizon": 10,
  "sigma": 0.01,
  "eta": 0.99
}
)json";

inline constexpr std::string_view zigzag = R"json({
  "version": 1,
  "name": "zigzag",
  "bounds": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
  "goal": {"lo": [0.0, 0.0], "hi": [0.2, 0.2]},
  "obstacles": [
    {"type": "tri", "coords": [[0.25, 0.3], [0.5, 0.3], [0.375, 0.55]]},
    {"type": "tri", "coords": [[0.45, 0.65], [0.7, 0.65], [0.575, 0.4]]},
    {"type": "tri", "coords": [[0.65, 0.8], [0.9, 0.8], [0.775, 0.55]]}
  ],
  "velocity_clip": [-0.5, 0.1],
  "start": [0.95, 0.95, 0.0, 0.0],
  "horizon": 10,
  "sigma": 0.01,
  "eta": 0.99
}
)json";

} // namespace layouts

inline std::string_view builtin_layout(std::string_view name) {
    if (name == "v1") return layouts::v1;
    if (name == "v2") return layouts::v2;
    if (name == "zigzag") return layouts::zigzag;
    throw std::invalid_argument("unknown layout " + std::string(name));
}

namespace detail {
inline Box box_from_json(const nlohmann::json& j) {
    return Box(j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>());
}
} // namespace detail

inline ReachAvoidSpec spec_from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1) throw std::invalid_argument("unsupported layout version");
    ReachAvoidSpec s;
    s.bounds = detail::box_from_json(j.at("bounds"));
    s.goal = detail::box_from_json(j.at("goal"));
    for (const auto& o : j.at("obstacles")) {
        const std::string type = o.at("type").get<std::string>();
        const auto& c = o.at("coords");
        if (type == "rect") {
            if (c.size() != 2) throw std::invalid_argument("rect obstacle needs [lo, hi]");
            s.obstacles.push_back(
                Obstacle::rectangle(Box(c[0].get<std::vector<double>>(), c[1].get<std::vector<double>>())));
        } else if (type == "tri") {
            if (c.size() != 3) throw std::invalid_argument("tri obstacle needs three vertices");
            std::array<std::array<double, 2>, 3> v{};
            for (std::size_t i = 0; i < 3; ++i) {
                const auto p = c[i].get<std::vector<double>>();
                if (p.size() != 2) throw std::invalid_argument("triangle vertices are planar");
                v[i] = {p[0], p[1]};
            }
            s.obstacles.push_back(Obstacle::triangle(v));
        } else {
            throw std::invalid_argument("unknown obstacle type " + type);
        }
    }
    const auto clip = j.at("velocity_clip").get<std::vector<double>>();
    if (clip.size() != 2) throw std::invalid_argument("velocity_clip needs two entries");
    s.velocity_clip = Interval(clip[0], clip[1]);
    s.start = j.value("start", std::vector<double>{});
    s.horizon = j.value("horizon", std::size_t{10});
    s.sigma = j.value("sigma", 0.01);
    s.eta = j.value("eta", 0.99);
    s.validate();
    return s;
}

inline ReachAvoidSpec spec_from_string(std::string_view text) { return spec_from_json(nlohmann::json::parse(text)); }

inline nlohmann::json to_json(const ReachAvoidSpec& s) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : s.obstacles) {
        if (o.kind == Obstacle::Kind::rect)
            obs.push_back({{"type", "rect"}, {"coords", {o.rect.lower(), o.rect.upper()}}});
        else
            obs.push_back({{"type", "tri"}, {"coords", o.tri}});
    }
    return {{"version", 1},
            {"bounds", {{"lo", s.bounds.lower()}, {"hi", s.bounds.upper()}}},
            {"goal", {{"lo", s.goal.lower()}, {"hi", s.goal.upper()}}},
            {"obstacles", obs},
            {"velocity_clip", {s.velocity_clip.lo, s.velocity_clip.hi}},
            {"start", s.start},
            {"horizon", s.horizon},
            {"sigma", s.sigma},
            {"eta", s.eta}};
}

} // namespace reachcert

#pragma once

// Summary metrics of a run and a PPM heatmap of the initial value table.

#include "reachcert/certify.hpp"
#include "reachcert/grid.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace reachcert {

struct Report {
    std::optional<double> performance; // success fraction of simulated rollouts
    std::optional<double> avg_lower_bound;
    std::optional<double> coverage;
    std::string config_digest;
    std::optional<double> runtime_seconds; // only written when timing is requested
};

namespace detail {
inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
inline std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}
} // namespace detail

/// Metrics that were not computed are written as null.
inline nlohmann::json to_json(const Report& r) {
    nlohmann::json j{{"performance", detail::optional_json(r.performance)},
                     {"avg_lower_bound", detail::optional_json(r.avg_lower_bound)},
                     {"coverage", detail::optional_json(r.coverage)},
                     {"config_digest", r.config_digest}};
    if (r.runtime_seconds) j["runtime_seconds"] = *r.runtime_seconds;
    return j;
}

inline Report report_from_json(const nlohmann::json& j) {
    Report r;
    r.performance = detail::optional_from(j, "performance");
    r.avg_lower_bound = detail::optional_from(j, "avg_lower_bound");
    r.coverage = detail::optional_from(j, "coverage");
    r.config_digest = j.at("config_digest").get<std::string>();
    r.runtime_seconds = detail::optional_from(j, "runtime_seconds");
    return r;
}

/// Value of each cell of the first two position dimensions, minimised over
/// every other dimension. NaN marks columns with no non-unsafe cell.
inline std::vector<double> position_marginal(const GridSpec& g, const ValueTable& t, const std::vector<Label>& labels) {
    const std::size_t nx = g.count(0), ny = g.dims() > 1 && g.position_dims() > 1 ? g.count(1) : 1;
    std::vector<double> m(nx * ny, std::nan(""));
    for (std::size_t l = 0; l < g.n_cells(); ++l) {
        if (labels[l] == Label::unsafe) continue;
        const auto c = cell_at(g, l);
        const std::size_t ix = c.index[0], iy = ny > 1 ? c.index[1] : 0;
        double& v = m[iy * nx + ix];
        v = std::isnan(v) ? t.values[l] : std::min(v, t.values[l]);
    }
    return m;
}

/// Binary PPM (P6). Each position cell becomes a `scale`-pixel square; y
/// grows upwards. Colour runs from dark blue (0) to yellow (1); cells that
/// are unsafe for every velocity are grey.
inline void write_heatmap_ppm(std::ostream& os, const GridSpec& g, const ValueTable& t,
                              const std::vector<Label>& labels, std::size_t scale = 8) {
    const std::size_t nx = g.count(0), ny = g.dims() > 1 && g.position_dims() > 1 ? g.count(1) : 1;
    const auto m = position_marginal(g, t, labels);
    const std::size_t W = nx * scale, H = ny * scale;
    os << "P6\n" << W << ' ' << H << "\n255\n";
    for (std::size_t py = 0; py < H; ++py) {
        const std::size_t iy = ny - 1 - py / scale;
        for (std::size_t px = 0; px < W; ++px) {
            const double v = m[iy * nx + px / scale];
            unsigned char rgb[3];
            if (std::isnan(v)) {
                rgb[0] = rgb[1] = rgb[2] = 96;
            } else {
                const double a = std::clamp(v, 0.0, 1.0);
                rgb[0] = static_cast<unsigned char>(std::lround(20 + 235 * a));
                rgb[1] = static_cast<unsigned char>(std::lround(20 + 210 * a));
                rgb[2] = static_cast<unsigned char>(std::lround(120 * (1.0 - a)));
            }
            os.write(reinterpret_cast<const char*>(rgb), 3);
        }
    }
}

} // namespace reachcert

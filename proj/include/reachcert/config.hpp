#pragma once

// Versioned JSON run configuration shared by the command-line tool.
//
//   {"version": 1, "seed": 0, "layout": "v1" | "path/to/layout.json",
//    "horizon": N?, "sigma": s?,
//    "grid": {"counts": [..]} | {"position_width": w, "velocity_width": w},
//    "certify": {"n_s", "rho_w", "rho_w_scale", "n_p", "eta", "rho_x", "strict"},
//    "synthesis": {"n_s", "p_t", "alpha", "eps_robust", "actions_per_dim",
//                  "nn": {"hidden", "learning_rate", "epochs", "n_states"}},
//    "learning": {"episodes", "trajectories", "max_horizon", "hidden",
//                 "activation", "inference", "policy_iters", "lr",
//                 "hmc": {"n_samples", "burn_in", "leapfrog_steps",
//                         "step_size", "likelihood_sigma", "warm_start_steps"},
//                 "vi": {"epochs", "learning_rate", "likelihood_sigma"}},
//    "simulate": {"n_trajectories", "stepper": "true" | "bnn"}}
//
// Every key is optional; missing keys take the defaults below.

#include "reachcert/certify.hpp"
#include "reachcert/layouts.hpp"
#include "reachcert/learning.hpp"
#include "reachcert/serialization.hpp"
#include "reachcert/synthesize.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace reachcert {

struct SimulateConfig {
    std::size_t n_trajectories = 500;
    std::string stepper = "true";
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string layout = "v1";
    ReachAvoidSpec spec;
    PuckParams puck;
    GridSpec grid;
    CertifyParams certify;
    SynthesisConfig synthesis;
    std::size_t actions_per_dim = 10;
    LearningConfig learning;
    SimulateConfig simulate;
    nlohmann::json raw; // effective configuration, used for the digest
};

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline ReachAvoidSpec load_layout(const std::string& name) {
    if (name == "v1" || name == "v2" || name == "zigzag") return spec_from_string(builtin_layout(name));
    if (!std::filesystem::exists(name)) throw ConfigError("layout file not found: " + name);
    try {
        return spec_from_string(read_file(name));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed layout " + name + ": " + e.what());
    }
}

} // namespace detail

/// Builds the run configuration; throws ConfigError on invalid input.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (j.value("version", 1) != 1) throw ConfigError("unsupported config version");
        detail::take(j, "seed", c.seed);
        detail::take(j, "layout", c.layout);
        c.spec = detail::load_layout(c.layout);
        if (j.contains("horizon")) c.spec.horizon = j.at("horizon").get<std::size_t>();
        if (j.contains("sigma")) c.spec.sigma = j.at("sigma").get<double>();
        c.spec.validate();
        c.puck.dims = c.spec.dims();

        const auto g = j.value("grid", nlohmann::json::object());
        if (g.contains("counts")) {
            const auto counts = g.at("counts").get<std::vector<std::size_t>>();
            if (counts.size() != 2 * c.spec.dims()) throw ConfigError("grid counts must cover every state dimension");
            c.grid = GridSpec::for_spec(c.spec, counts);
        } else {
            c.grid = GridSpec::for_spec_widths(c.spec, g.value("position_width", 0.02), g.value("velocity_width", 0.08));
        }

        const auto ce = j.value("certify", nlohmann::json::object());
        detail::take(ce, "n_s", c.certify.n_s);
        if (ce.contains("rho_w") && !ce.at("rho_w").is_null()) c.certify.rho_w = ce.at("rho_w").get<double>();
        detail::take(ce, "rho_w_scale", c.certify.rho_w_scale);
        detail::take(ce, "n_p", c.certify.n_p);
        c.certify.eta = c.spec.eta;
        detail::take(ce, "eta", c.certify.eta);
        if (ce.contains("rho_x") && !ce.at("rho_x").is_null())
            c.certify.rho_x = ce.at("rho_x").get<std::vector<double>>();
        detail::take(ce, "strict", c.certify.strict);
        c.certify.seed = c.seed;
        c.certify.validate();

        const auto sy = j.value("synthesis", nlohmann::json::object());
        detail::take(sy, "n_s", c.synthesis.n_s);
        detail::take(sy, "p_t", c.synthesis.p_t);
        detail::take(sy, "alpha", c.synthesis.alpha);
        detail::take(sy, "eps_robust", c.synthesis.eps_robust);
        detail::take(sy, "actions_per_dim", c.actions_per_dim);
        const auto nn = sy.value("nn", nlohmann::json::object());
        detail::take(nn, "hidden", c.synthesis.nn.hidden);
        detail::take(nn, "learning_rate", c.synthesis.nn.learning_rate);
        detail::take(nn, "epochs", c.synthesis.nn.epochs);
        detail::take(nn, "n_states", c.synthesis.nn.n_states);
        c.synthesis.seed = c.seed;
        c.synthesis.validate();

        const auto le = j.value("learning", nlohmann::json::object());
        auto& L = c.learning;
        detail::take(le, "episodes", L.episodes);
        detail::take(le, "trajectories", L.trajectories);
        detail::take(le, "max_horizon", L.max_horizon);
        detail::take(le, "hidden", L.hidden);
        if (le.contains("activation")) L.activation = activation_from_string(le.at("activation").get<std::string>());
        if (le.contains("inference")) {
            const auto kind = le.at("inference").get<std::string>();
            if (kind == "hmc") L.inference = InferenceKind::hmc;
            else if (kind == "vi") L.inference = InferenceKind::vi;
            else throw ConfigError("inference must be hmc or vi");
        }
        detail::take(le, "policy_iters", L.policy_iters);
        detail::take(le, "lr", L.lr);
        const auto h = le.value("hmc", nlohmann::json::object());
        detail::take(h, "n_samples", L.hmc.n_samples);
        detail::take(h, "burn_in", L.hmc.burn_in);
        detail::take(h, "leapfrog_steps", L.hmc.leapfrog_steps);
        detail::take(h, "step_size", L.hmc.step_size);
        detail::take(h, "likelihood_sigma", L.hmc.likelihood_sigma);
        detail::take(h, "warm_start_steps", L.hmc.warm_start_steps);
        const auto v = le.value("vi", nlohmann::json::object());
        detail::take(v, "epochs", L.vi.epochs);
        detail::take(v, "learning_rate", L.vi.learning_rate);
        detail::take(v, "likelihood_sigma", L.vi.likelihood_sigma);
        L.seed = c.seed;

        const auto si = j.value("simulate", nlohmann::json::object());
        detail::take(si, "n_trajectories", c.simulate.n_trajectories);
        detail::take(si, "stepper", c.simulate.stepper);
        if (c.simulate.stepper != "true" && c.simulate.stepper != "bnn")
            throw ConfigError("simulate.stepper must be true or bnn");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed configuration: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    c.raw = j;
    c.raw["seed"] = c.seed;
    c.raw["layout_spec"] = to_json(c.spec);
    c.raw["grid_resolved"] = to_json(c.grid);
    return c;
}

/// Digest of the effective configuration (worker count excluded).
inline std::string config_digest(const RunConfig& c, const std::string& extra = "") {
    return hex_digest(fnv1a(extra.data(), extra.size(), digest(c.raw.dump())));
}

} // namespace reachcert

// reachcert command-line tool: train a BNN dynamics model, certify a policy,
// synthesise policies and simulate them.

#include "reachcert/config.hpp"
#include "reachcert/reachcert.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace reachcert;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::string config;
    std::string out_dir = ".";
    std::string layout;
    long long seed = -1;
    long long workers = 0;
    long long horizon = 0;
    long long n_s = 0;
    bool timing = false;
};

nlohmann::json load_config_json(const Common& c) {
    nlohmann::json j = nlohmann::json::object();
    if (!c.config.empty()) {
        if (!fs::exists(c.config)) throw UsageError("config file not found: " + c.config);
        try {
            j = nlohmann::json::parse(read_file(c.config));
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("malformed config: ") + e.what());
        }
    }
    if (!c.layout.empty()) j["layout"] = c.layout;
    if (c.seed >= 0) j["seed"] = c.seed;
    if (c.horizon > 0) j["horizon"] = c.horizon;
    if (c.n_s > 0) j["certify"]["n_s"] = c.n_s;
    return j;
}

std::size_t resolve_workers(const Common& c) {
    return c.workers > 0 ? static_cast<std::size_t>(c.workers) : default_workers();
}

void write_text(const fs::path& p, const std::string& s) { write_file(p.string(), s); }

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_tables(const fs::path& dir, const GridSpec& g, const CertificationResult& r) {
    for (std::size_t k = 0; k < r.tables.size(); ++k) {
        std::ostringstream os;
        write_table_csv(os, g, r.tables[k]);
        write_text(dir / ("K_" + std::to_string(k) + ".csv"), os.str());
    }
    nlohmann::json side = to_json(g);
    side["horizon"] = r.horizon();
    side["files"] = "K_<k>.csv for k = 0..horizon";
    side["columns"] = "index tuple i*, cell centre c*, probability";
    write_text(dir / "grid.json", dump(side));
    std::ostringstream ppm;
    write_heatmap_ppm(ppm, g, r.tables.front(), r.labels);
    write_text(dir / "heatmap_K0.ppm", ppm.str());
}

double performance(const RunConfig& cfg, const Policy& policy, const Posterior* post, std::size_t n,
                   std::uint64_t seed) {
    if (cfg.spec.start.empty()) throw ConfigError("layout has no start state for simulation");
    Stepper stepper = TrueStepper{cfg.puck};
    if (cfg.simulate.stepper == "bnn") {
        if (!post) throw UsageError("the bnn stepper needs --posterior");
        stepper = BnnStepper{post};
    }
    Rng rng = make_rng(seed, {0x53494dULL});
    return success_rate(cfg.spec, stepper, as_function(policy), cfg.spec.start, n, rng);
}

void finish_report(const fs::path& dir, Report rep, const Common& c, std::chrono::steady_clock::time_point t0) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.timing) rep.runtime_seconds = secs;
    write_text(dir / "report.json", dump(to_json(rep)));
    nlohmann::json shown = to_json(rep);
    shown["runtime_seconds"] = secs;
    std::cout << shown.dump() << "\n";
}

fs::path prepare_out(const Common& c) {
    fs::path d(c.out_dir);
    fs::create_directories(d);
    return d;
}

Posterior require_posterior(const std::string& path) {
    if (path.empty()) throw UsageError("--posterior is required");
    if (!fs::exists(path)) throw UsageError("posterior file not found: " + path);
    return load_posterior(path);
}

Policy require_policy(const std::string& path) {
    if (path.empty()) throw UsageError("--policy is required");
    if (!fs::exists(path)) throw UsageError("policy file not found: " + path);
    return load_policy(path);
}

void check_policy(const RunConfig& cfg, const Policy& policy) {
    if (action_dim(policy) != cfg.puck.dims) throw ConfigError("policy action dimension does not match the layout");
    if (const auto* t = std::get_if<TabularPolicy>(&policy); t && t->grid.dims() != cfg.grid.dims())
        throw ConfigError("policy grid does not match the configured grid");
    if (const auto* n = std::get_if<NeuralPolicy>(&policy); n && n->arch.input_dim() != cfg.grid.dims())
        throw ConfigError("neural policy input does not match the state dimension");
}

// Squared error of the posterior-mean prediction, averaged over outputs.
double fit_mse(const Posterior& post, const Dataset& data) {
    const auto dyn = mean_dynamics(post, 50);
    const std::size_t d = data.input_dim;
    double se = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.input(i);
        const auto y = dyn(x.first(d - data.target_dim / 2), x.subspan(d - data.target_dim / 2));
        for (std::size_t o = 0; o < y.size(); ++o) se += (y[o] - data.target(i)[o]) * (y[o] - data.target(i)[o]);
    }
    return data.empty() ? 0.0 : se / static_cast<double>(data.size() * data.target_dim);
}

std::string file_digest(const std::string& path) { return hex_digest(digest(read_file(path))); }

// ---------------------------------------------------------------------------

int cmd_train(const Common& c, const std::string& inference, long long samples, long long burn_in,
              long long episodes, const std::string& dataset) {
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json j = load_config_json(c);
    if (!inference.empty()) j["learning"]["inference"] = inference;
    if (samples > 0) j["learning"]["hmc"]["n_samples"] = samples;
    if (burn_in >= 0) j["learning"]["hmc"]["burn_in"] = burn_in;
    if (episodes >= 0) j["learning"]["episodes"] = episodes;
    RunConfig cfg = parse_run_config(j);
    cfg.learning.workers = resolve_workers(c);
    const fs::path dir = prepare_out(c);

    Posterior post;
    Report rep;
    Dataset data(3 * cfg.puck.dims, 2 * cfg.puck.dims);
    if (!dataset.empty()) {
        if (!fs::exists(dataset)) throw UsageError("dataset not found: " + dataset);
        std::ifstream in(dataset);
        std::string line;
        std::getline(in, line); // header
        std::vector<double> row;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            row.clear();
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
            if (row.size() != data.input_dim + data.target_dim) throw UsageError("dataset row has the wrong width");
            data.add(std::span<const double>(row).first(data.input_dim),
                     std::span<const double>(row).subspan(data.input_dim));
        }
        if (data.empty()) throw UsageError("dataset is empty");
        std::vector<std::size_t> widths{data.input_dim};
        widths.insert(widths.end(), cfg.learning.hidden.begin(), cfg.learning.hidden.end());
        widths.push_back(data.target_dim);
        post = fit_posterior(data, Architecture(widths, cfg.learning.activation), cfg.learning, cfg.seed);
        rep.config_digest = config_digest(cfg, file_digest(dataset));
    } else {
        if (cfg.learning.episodes == 0) throw UsageError("training needs at least one episode or a --dataset");
        auto res = learn_initial_policy(cfg.spec, cfg.puck, cfg.grid, cfg.learning);
        post = std::move(*res.posterior);
        data = std::move(res.data);
        save_policy((dir / "policy_learned.bin").string(), Policy(res.policy));
        if (cfg.simulate.n_trajectories > 0)
            rep.performance = performance(cfg, Policy(res.policy), &post, cfg.simulate.n_trajectories, cfg.seed);
        std::ostringstream os;
        os << "s0,s1,s2,s3,a0,a1,t0,t1,t2,t3\n";
        for (std::size_t i = 0; i < data.size(); ++i) {
            std::string sep;
            for (double v : data.input(i)) { os << sep << format_double(v); sep = ","; }
            for (double v : data.target(i)) os << ',' << format_double(v);
            os << '\n';
        }
        write_text(dir / "dataset.csv", os.str());
        rep.config_digest = config_digest(cfg);
    }
    save_posterior((dir / "posterior.bin").string(), post);
    std::cout << "posterior.mse = " << fit_mse(post, data) << "\n";

    const auto& prov = std::visit([](const auto& p) -> const Provenance& { return p.provenance; }, post);
    for (const auto& [k, v] : prov) std::cout << "posterior." << k << " = " << format_double(v) << "\n";
    finish_report(dir, rep, c, t0);
    return 0;
}

int cmd_certify(const Common& c, const std::string& posterior_path, const std::string& policy_path) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = parse_run_config(load_config_json(c));
    cfg.certify.workers = resolve_workers(c);
    const Posterior post = require_posterior(posterior_path);
    const Policy policy = require_policy(policy_path);
    check_policy(cfg, policy);
    const fs::path dir = prepare_out(c);
    const auto res = run(post, policy, cfg.spec, cfg.grid, cfg.certify);
    write_tables(dir, cfg.grid, res);
    Report rep;
    rep.avg_lower_bound = res.metrics.avg_lower_bound;
    rep.coverage = res.metrics.coverage;
    if (cfg.simulate.n_trajectories > 0)
        rep.performance = performance(cfg, policy, &post, cfg.simulate.n_trajectories, cfg.seed);
    rep.config_digest = config_digest(cfg, file_digest(posterior_path) + file_digest(policy_path));
    finish_report(dir, rep, c, t0);
    return 0;
}

void write_actions(const fs::path& dir, const GridSpec& g, const SynthesisResult& s) {
    std::ostringstream os;
    os << "k,cell";
    for (std::size_t i = 0; i < s.policy.action_dim; ++i) os << ",u" << i;
    os << ",estimate,bound\n";
    for (std::size_t k = 0; k < s.policy.n_tables(); ++k)
        for (std::size_t l = 0; l < g.n_cells(); ++l) {
            if (!s.policy.is_defined(k, l)) continue;
            os << k << ',' << l;
            for (double v : s.policy.get(k, l)) os << ',' << format_double(v);
            os << ',' << format_double(s.estimates[k][l]) << ',' << format_double(s.certificate.tables[k].values[l])
               << '\n';
        }
    write_text(dir / "actions.csv", os.str());
}

int cmd_synthesize(const Common& c, const std::string& posterior_path, bool neural) {
    const auto t0 = std::chrono::steady_clock::now();
    RunConfig cfg = parse_run_config(load_config_json(c));
    cfg.certify.workers = resolve_workers(c);
    const Posterior post = require_posterior(posterior_path);
    const fs::path dir = prepare_out(c);
    Report rep;
    Policy policy;
    CertificationResult cert;
    if (neural) {
        auto r = train_nn_policy(post, cfg.spec, cfg.grid, cfg.certify, cfg.synthesis, nullptr);
        policy = std::move(r.policy);
        cert = std::move(r.certificate);
    } else {
        const ActionGrid agrid(cfg.puck.dims, cfg.actions_per_dim);
        auto r = max_cert(post, cfg.spec, cfg.grid, agrid, cfg.certify, cfg.synthesis);
        write_actions(dir, cfg.grid, r);
        policy = r.policy;
        cert = std::move(r.certificate);
    }
    save_policy((dir / "policy.bin").string(), policy);
    write_tables(dir, cfg.grid, cert);
    rep.avg_lower_bound = cert.metrics.avg_lower_bound;
    rep.coverage = cert.metrics.coverage;
    if (cfg.simulate.n_trajectories > 0)
        rep.performance = performance(cfg, policy, &post, cfg.simulate.n_trajectories, cfg.seed);
    rep.config_digest = config_digest(cfg, file_digest(posterior_path));
    finish_report(dir, rep, c, t0);
    return 0;
}

int cmd_simulate(const Common& c, const std::string& policy_path, const std::string& posterior_path,
                 long long n, const std::string& stepper) {
    const auto t0 = std::chrono::steady_clock::now();
    nlohmann::json j = load_config_json(c);
    if (n >= 0) j["simulate"]["n_trajectories"] = n;
    if (!stepper.empty()) j["simulate"]["stepper"] = stepper;
    RunConfig cfg = parse_run_config(j);
    if (cfg.simulate.n_trajectories == 0) throw UsageError("need at least one trajectory");
    if (cfg.spec.start.empty()) throw ConfigError("layout has no start state for simulation");
    const Policy policy = require_policy(policy_path);
    check_policy(cfg, policy);
    std::optional<Posterior> post;
    Stepper st = TrueStepper{cfg.puck};
    if (cfg.simulate.stepper == "bnn") {
        post = require_posterior(posterior_path);
        st = BnnStepper{&*post};
    }
    const fs::path dir = prepare_out(c);
    Rng rng = make_rng(cfg.seed, {0x53494dULL});
    const auto fn = as_function(policy);
    std::ostringstream os;
    os << "trajectory,step,outcome";
    const std::size_t sd = cfg.spec.start.size();
    for (std::size_t i = 0; i < sd; ++i) os << ",x" << i;
    for (std::size_t i = 0; i < cfg.puck.dims; ++i) os << ",u" << i;
    os << '\n';
    std::size_t hits = 0;
    for (std::size_t t = 0; t < cfg.simulate.n_trajectories; ++t) {
        const auto tr = simulate(cfg.spec, st, fn, cfg.spec.start, rng);
        if (tr.outcome == Outcome::reached) ++hits;
        for (std::size_t k = 0; k < tr.states.size(); ++k) {
            os << t << ',' << k << ',' << to_string(tr.outcome);
            for (double v : tr.states[k]) os << ',' << format_double(v);
            for (std::size_t i = 0; i < cfg.puck.dims; ++i)
                os << ',' << (k < tr.actions.size() ? format_double(tr.actions[k][i]) : std::string());
            os << '\n';
        }
    }
    write_text(dir / "trajectories.csv", os.str());
    Report rep;
    rep.performance = static_cast<double>(hits) / static_cast<double>(cfg.simulate.n_trajectories);
    rep.config_digest =
        config_digest(cfg, file_digest(policy_path) + (post ? file_digest(posterior_path) : std::string()));
    finish_report(dir, rep, c, t0);
    return 0;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config, "JSON run configuration");
    app->add_option("-o,--out-dir", c.out_dir, "output directory");
    app->add_option("--layout", c.layout, "built-in layout (v1, v2, zigzag) or layout JSON file");
    app->add_option("--seed", c.seed, "random seed");
    app->add_option("--workers", c.workers, "parallel workers (default: REACHCERT_WORKERS or 1)");
    app->add_option("--horizon", c.horizon, "horizon N");
    app->add_option("--n-s", c.n_s, "weight-box samples per cell");
    app->add_flag("--timing", c.timing, "record runtime in report.json");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Certified reach-avoid bounds and policy synthesis for Bayesian neural network dynamics"};
    app.require_subcommand(1);
    Common common;
    std::string inference, dataset, posterior_path, policy_path, stepper;
    long long samples = 0, burn_in = -1, episodes = -1, n_traj = -1;

    auto* train = app.add_subcommand("train-bnn", "collect data and fit a BNN posterior");
    add_common(train, common);
    train->add_option("--inference", inference, "hmc or vi")->check(CLI::IsMember({"hmc", "vi"}));
    train->add_option("--samples", samples, "HMC samples kept");
    train->add_option("--burn-in", burn_in, "HMC burn-in iterations");
    train->add_option("--episodes", episodes, "learning episodes");
    train->add_option("--dataset", dataset, "CSV of (state, action, next state) rows instead of collecting");

    auto* cert = app.add_subcommand("certify", "certify a policy");
    add_common(cert, common);
    cert->add_option("--posterior", posterior_path, "posterior file")->required();
    cert->add_option("--policy", policy_path, "policy file")->required();

    auto* syn = app.add_subcommand("synthesize", "synthesise a maximally certified tabular policy");
    add_common(syn, common);
    syn->add_option("--posterior", posterior_path, "posterior file")->required();

    auto* synn = app.add_subcommand("synthesize-nn", "train and certify per-step neural policies");
    add_common(synn, common);
    synn->add_option("--posterior", posterior_path, "posterior file")->required();

    auto* sim = app.add_subcommand("simulate", "roll out a policy");
    add_common(sim, common);
    sim->add_option("--policy", policy_path, "policy file")->required();
    sim->add_option("--posterior", posterior_path, "posterior file (bnn stepper)");
    sim->add_option("-n,--n-trajectories", n_traj, "number of rollouts");
    sim->add_option("--stepper", stepper, "true or bnn")->check(CLI::IsMember({"true", "bnn"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train) return cmd_train(common, inference, samples, burn_in, episodes, dataset);
        if (*cert) return cmd_certify(common, posterior_path, policy_path);
        if (*syn) return cmd_synthesize(common, posterior_path, false);
        if (*synn) return cmd_synthesize(common, posterior_path, true);
        if (*sim) return cmd_simulate(common, policy_path, posterior_path, n_traj, stepper);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "file format error: " << e.what() << "\n";
        return 2;
    } catch (const PolicyError& e) {
        std::cerr << "policy error: " << e.what() << "\n";
        return 2;
    } catch (const InferenceError& e) {
        std::cerr << "inference failed: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

#pragma once

// Binary container shared by posterior and policy files:
//   8-byte magic "RCERTv1\0"
//   uint64 little-endian length of the JSON header
//   JSON header (keys sorted, so the bytes are deterministic)
//   payload of little-endian IEEE-754 float64 values
// Weights are flattened layer by layer; within a layer the weight matrix
// row-major (output-major) followed by the bias vector.

#include "reachcert/grid.hpp"
#include "reachcert/nn.hpp"
#include "reachcert/policy.hpp"
#include "reachcert/posterior.hpp"
#include "reachcert/random.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachcert {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::array<char, 8> container_magic{'R', 'C', 'E', 'R', 'T', 'v', '1', '\0'};
inline constexpr const char* flattening_order = "layer-major; per layer row-major weights (out x in) then biases";

struct Container {
    nlohmann::json header;
    std::vector<double> payload;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

} // namespace detail

inline std::string encode(const Container& c) {
    const std::string head = c.header.dump();
    std::string out(container_magic.begin(), container_magic.end());
    detail::put_u64(out, head.size());
    out += head;
    out.reserve(out.size() + 8 * c.payload.size());
    for (double v : c.payload) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline Container decode(const std::string& bytes) {
    if (bytes.size() < 16 || !std::equal(container_magic.begin(), container_magic.end(), bytes.begin()))
        throw FormatError("not a reachcert container");
    const std::uint64_t hlen = detail::get_u64(bytes, 8);
    if (hlen > bytes.size() - 16) throw FormatError("truncated container header");
    Container c;
    try {
        c.header = nlohmann::json::parse(bytes.substr(16, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed container header: ") + e.what());
    }
    const std::size_t start = 16 + hlen;
    if ((bytes.size() - start) % 8 != 0) throw FormatError("container payload is not a whole number of float64");
    c.payload.resize((bytes.size() - start) / 8);
    for (std::size_t i = 0; i < c.payload.size(); ++i)
        c.payload[i] = std::bit_cast<double>(detail::get_u64(bytes, start + 8 * i));
    return c;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("failed writing " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::uint64_t digest(const std::string& bytes) { return fnv1a(bytes.data(), bytes.size()); }

inline std::string hex_digest(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Architectures

inline nlohmann::json to_json(const Architecture& a) {
    return {{"widths", a.widths()}, {"activation", std::string(to_string(a.hidden_activation()))}};
}

inline Architecture architecture_from_json(const nlohmann::json& j) {
    return Architecture(j.at("widths").get<std::vector<std::size_t>>(),
                        activation_from_string(j.at("activation").get<std::string>()));
}

// ---------------------------------------------------------------------------
// Posteriors

inline std::string encode_posterior(const Posterior& post) {
    Container c;
    const auto& arch = architecture(post);
    c.header = {{"format", "reachcert-posterior"},
                {"version", 1},
                {"architecture", to_json(arch)},
                {"flattening", flattening_order},
                {"n_params", arch.n_params()}};
    if (const auto* s = std::get_if<SamplePosterior>(&post)) {
        c.header["kind"] = "samples";
        c.header["n_vectors"] = s->samples.size();
        c.header["provenance"] = s->provenance;
        for (const auto& w : s->samples) c.payload.insert(c.payload.end(), w.values.begin(), w.values.end());
    } else {
        const auto& g = std::get<GaussianPosterior>(post);
        c.header["kind"] = "gaussian";
        c.header["n_vectors"] = 2;
        c.header["provenance"] = g.provenance;
        c.payload = g.mean;
        c.payload.insert(c.payload.end(), g.variance.begin(), g.variance.end());
    }
    return encode(c);
}

inline Posterior decode_posterior(const std::string& bytes) {
    const Container c = decode(bytes);
    const auto& h = c.header;
    try {
        if (h.at("format") != "reachcert-posterior") throw FormatError("not a posterior file");
        if (h.at("version").get<int>() != 1) throw FormatError("unsupported posterior file version");
        const Architecture arch = architecture_from_json(h.at("architecture"));
        const std::size_t np = h.at("n_params").get<std::size_t>();
        const std::size_t nv = h.at("n_vectors").get<std::size_t>();
        if (np != arch.n_params() || c.payload.size() != np * nv) throw FormatError("posterior payload size mismatch");
        const auto prov = h.at("provenance").get<Provenance>();
        const std::string kind = h.at("kind").get<std::string>();
        if (kind == "samples") {
            std::vector<WeightSet> ws(nv);
            for (std::size_t i = 0; i < nv; ++i)
                ws[i].values.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(i * np),
                                    c.payload.begin() + static_cast<std::ptrdiff_t>((i + 1) * np));
            return SamplePosterior(arch, std::move(ws), prov);
        }
        if (kind == "gaussian") {
            if (nv != 2) throw FormatError("gaussian posterior needs mean and variance");
            std::vector<double> mean(c.payload.begin(), c.payload.begin() + static_cast<std::ptrdiff_t>(np));
            std::vector<double> var(c.payload.begin() + static_cast<std::ptrdiff_t>(np), c.payload.end());
            return GaussianPosterior(arch, std::move(mean), std::move(var), prov);
        }
        throw FormatError("unknown posterior kind " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed posterior header: ") + e.what());    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("invalid posterior: ") + e.what());
    }
}

inline void save_posterior(const std::string& path, const Posterior& post) { write_file(path, encode_posterior(post)); }
inline Posterior load_posterior(const std::string& path) { return decode_posterior(read_file(path)); }

// ---------------------------------------------------------------------------
// Policies

inline std::string encode_policy(const Policy& policy) {
    Container c;
    c.header = {{"format", "reachcert-policy"}, {"version", 1}};
    if (const auto* t = std::get_if<TabularPolicy>(&policy)) {
        c.header["kind"] = "tabular";
        c.header["grid"] = to_json(t->grid);
        c.header["action_dim"] = t->action_dim;
        c.header["n_tables"] = t->n_tables();
        c.header["action_bounds"] = {t->action_bounds.lo, t->action_bounds.hi};
        c.header["layout"] = "per table: actions (cell-major), then defined flags (0/1)";
        for (std::size_t k = 0; k < t->n_tables(); ++k) {
            c.payload.insert(c.payload.end(), t->tables[k].begin(), t->tables[k].end());
            for (auto f : t->defined[k]) c.payload.push_back(f ? 1.0 : 0.0);
        }
    } else {
        const auto& n = std::get<NeuralPolicy>(policy);
        c.header["kind"] = "neural";
        c.header["architecture"] = to_json(n.arch);
        c.header["flattening"] = flattening_order;
        c.header["n_steps"] = n.steps.size();
        c.header["action_bounds"] = {n.action_bounds.lo, n.action_bounds.hi};
        for (const auto& w : n.steps) c.payload.insert(c.payload.end(), w.values.begin(), w.values.end());
    }
    return encode(c);
}

inline Policy decode_policy(const std::string& bytes) {
    const Container c = decode(bytes);
    const auto& h = c.header;
    try {
        if (h.at("format") != "reachcert-policy") throw FormatError("not a policy file");
        if (h.at("version").get<int>() != 1) throw FormatError("unsupported policy file version");
        const auto ab = h.at("action_bounds").get<std::vector<double>>();
        if (ab.size() != 2) throw FormatError("action_bounds must have two entries");
        const std::string kind = h.at("kind").get<std::string>();
        if (kind == "tabular") {
            TabularPolicy t(grid_from_json(h.at("grid")), h.at("action_dim").get<std::size_t>(),
                            h.at("n_tables").get<std::size_t>());
            t.action_bounds = Interval(ab[0], ab[1]);
            const std::size_t nc = t.grid.n_cells(), per = nc * t.action_dim + nc;
            if (c.payload.size() != per * t.n_tables()) throw FormatError("policy payload size mismatch");
            for (std::size_t k = 0; k < t.n_tables(); ++k) {
                const auto base = c.payload.begin() + static_cast<std::ptrdiff_t>(k * per);
                t.tables[k].assign(base, base + static_cast<std::ptrdiff_t>(nc * t.action_dim));
                for (std::size_t l = 0; l < nc; ++l) t.defined[k][l] = base[static_cast<std::ptrdiff_t>(nc * t.action_dim + l)] != 0.0;
            }
            return t;
        }
        if (kind == "neural") {
            const Architecture arch = architecture_from_json(h.at("architecture"));
            const std::size_t ns = h.at("n_steps").get<std::size_t>();
            if (c.payload.size() != ns * arch.n_params()) throw FormatError("policy payload size mismatch");
            std::vector<WeightSet> steps(ns);
            for (std::size_t k = 0; k < ns; ++k)
                steps[k].values.assign(c.payload.begin() + static_cast<std::ptrdiff_t>(k * arch.n_params()),
                                       c.payload.begin() + static_cast<std::ptrdiff_t>((k + 1) * arch.n_params()));
            NeuralPolicy n(arch, std::move(steps));
            n.action_bounds = Interval(ab[0], ab[1]);
            return n;
        }
        throw FormatError("unknown policy kind " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed policy header: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("invalid policy: ") + e.what());
    }
}

inline void save_policy(const std::string& path, const Policy& p) { write_file(path, encode_policy(p)); }
inline Policy load_policy(const std::string& path) { return decode_policy(read_file(path)); }

} // namespace reachcert

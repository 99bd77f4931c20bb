#pragma once

// Fully-connected networks used both as dynamics models and as policies.
//
// Parameters are stored flat. The flattening order is layer-major and, within
// a layer, the row-major weight matrix (rows = outputs, cols = inputs) followed
// by the bias vector. Posterior and policy files rely on this order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace reachcert {

enum class Activation { sigmoid, tanh, relu };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    }
    return "sigmoid";
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

inline double activate(Activation a, double v) {
    switch (a) {
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::tanh: return std::tanh(v);
    case Activation::relu: return v > 0.0 ? v : 0.0;
    }
    return v;
}

/// Derivative expressed through the activation output y = a(v).
inline double activate_derivative(Activation a, double v, double y) {
    switch (a) {
    case Activation::sigmoid: return y * (1.0 - y);
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return v > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

/// Offsets of one layer inside the flat parameter vector.
struct LayerLayout {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

/// Layer widths (input, hidden..., output) and the hidden activation.
/// The output layer is always linear.
class Architecture {
public:
    Architecture() = default;
    Architecture(std::vector<std::size_t> widths, Activation hidden = Activation::sigmoid)
        : widths_(std::move(widths)), hidden_(hidden) {
        if (widths_.size() < 2)
            throw std::invalid_argument("architecture needs at least input and output widths");
        for (auto w : widths_)
            if (w == 0) throw std::invalid_argument("architecture widths must be positive");
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            LayerLayout lay;
            lay.in = widths_[l];
            lay.out = widths_[l + 1];
            lay.weight_offset = offset;
            offset += lay.in * lay.out;
            lay.bias_offset = offset;
            offset += lay.out;
            layers_.push_back(lay);
        }
        n_params_ = offset;
    }

    const std::vector<std::size_t>& widths() const { return widths_; }
    Activation hidden_activation() const { return hidden_; }
    std::size_t input_dim() const { return widths_.front(); }
    std::size_t output_dim() const { return widths_.back(); }
    std::size_t n_layers() const { return layers_.size(); }
    std::size_t n_params() const { return n_params_; }
    const LayerLayout& layer(std::size_t i) const { return layers_[i]; }
    const std::vector<LayerLayout>& layers() const { return layers_; }
    std::size_t max_width() const {
        std::size_t m = 0;
        for (auto w : widths_) m = std::max(m, w);
        return m;
    }
    bool is_hidden(std::size_t layer) const { return layer + 1 < layers_.size(); }

    bool operator==(const Architecture& o) const {
        return widths_ == o.widths_ && hidden_ == o.hidden_;
    }

private:
    std::vector<std::size_t> widths_;
    Activation hidden_ = Activation::sigmoid;
    std::vector<LayerLayout> layers_;
    std::size_t n_params_ = 0;
};

/// A concrete parameterisation of an Architecture (all weights and biases).
struct WeightSet {
    std::vector<double> values;

    bool operator==(const WeightSet&) const = default;

    double weight(const Architecture& arch, std::size_t layer, std::size_t row, std::size_t col) const {
        const auto& l = arch.layer(layer);
        return values[l.weight_offset + row * l.in + col];
    }
    double bias(const Architecture& arch, std::size_t layer, std::size_t row) const {
        return values[arch.layer(layer).bias_offset + row];
    }
};

inline std::vector<double> flatten(const WeightSet& w) { return w.values; }

inline WeightSet unflatten(const Architecture& arch, std::span<const double> v) {
    if (v.size() != arch.n_params())
        throw std::invalid_argument("parameter vector has length " + std::to_string(v.size()) +
                                    ", architecture needs " + std::to_string(arch.n_params()));
    return WeightSet{std::vector<double>(v.begin(), v.end())};
}

/// Zero-mean prior variances: 2 * 2 / (fan_in + fan_out) for every weight and
/// bias of a layer.
inline std::vector<double> glorot_prior(const Architecture& arch) {
    std::vector<double> var(arch.n_params());
    for (const auto& l : arch.layers()) {
        const double v = 2.0 * 2.0 / static_cast<double>(l.in + l.out);
        for (std::size_t i = 0; i < l.in * l.out; ++i) var[l.weight_offset + i] = v;
        for (std::size_t i = 0; i < l.out; ++i) var[l.bias_offset + i] = v;
    }
    return var;
}

/// Random parameters drawn from the Glorot prior.
template <class Rng>
WeightSet glorot_init(const Architecture& arch, Rng& rng, double scale = 1.0) {
    const auto var = glorot_prior(arch);
    std::normal_distribution<double> normal(0.0, 1.0);
    WeightSet w{std::vector<double>(arch.n_params())};
    for (std::size_t i = 0; i < var.size(); ++i) w.values[i] = scale * std::sqrt(var[i]) * normal(rng);
    return w;
}

namespace detail {
inline void check_shapes(const Architecture& arch, std::span<const double> w, std::span<const double> x) {
    if (w.size() != arch.n_params())
        throw std::invalid_argument("weight vector does not match architecture");
    if (x.size() != arch.input_dim())
        throw std::invalid_argument("input has length " + std::to_string(x.size()) + ", network expects " +
                                    std::to_string(arch.input_dim()));
}
} // namespace detail

/// Reusable activation buffers for forward/backward passes.
struct ForwardTrace {
    std::vector<std::vector<double>> pre;  // per layer pre-activations
    std::vector<std::vector<double>> post; // post[0] = input, post[l+1] = layer l output
};

/// Forward pass recording every layer. Summation order per unit: inputs in
/// order, then bias. Interval propagation uses the same order.
inline std::span<const double> forward_traced(const Architecture& arch, std::span<const double> w,
                                              std::span<const double> x, ForwardTrace& t) {
    detail::check_shapes(arch, w, x);
    const auto nl = arch.n_layers();
    t.pre.resize(nl);
    t.post.resize(nl + 1);
    t.post[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < nl; ++l) {
        const auto& lay = arch.layer(l);
        const double* W = w.data() + lay.weight_offset;
        const double* b = w.data() + lay.bias_offset;
        const auto& in = t.post[l];
        auto& pre = t.pre[l];
        auto& out = t.post[l + 1];
        pre.resize(lay.out);
        out.resize(lay.out);
        const bool hidden = arch.is_hidden(l);
        for (std::size_t r = 0; r < lay.out; ++r) {
            double s = 0.0;
            const double* row = W + r * lay.in;
            for (std::size_t c = 0; c < lay.in; ++c) s += row[c] * in[c];
            s += b[r];
            pre[r] = s;
            out[r] = hidden ? activate(arch.hidden_activation(), s) : s;
        }
    }
    return t.post.back();
}

inline std::vector<double> forward(const Architecture& arch, std::span<const double> w, std::span<const double> x) {
    ForwardTrace t;
    auto y = forward_traced(arch, w, x, t);
    return {y.begin(), y.end()};
}

inline std::vector<double> forward(const Architecture& arch, const WeightSet& w, std::span<const double> x) {
    return forward(arch, std::span<const double>(w.values), x);
}

/// Reverse-mode pass through a recorded forward pass. Accumulates dL/dw into
/// `grad_w` (when non-empty) and returns dL/dx.
inline std::vector<double> backward(const Architecture& arch, std::span<const double> w, const ForwardTrace& t,
                                    std::span<const double> grad_out, std::span<double> grad_w) {
    const auto nl = arch.n_layers();
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    std::vector<double> next;
    for (std::size_t l = nl; l-- > 0;) {
        const auto& lay = arch.layer(l);
        if (arch.is_hidden(l))
            for (std::size_t r = 0; r < lay.out; ++r)
                delta[r] *= activate_derivative(arch.hidden_activation(), t.pre[l][r], t.post[l + 1][r]);
        const auto& in = t.post[l];
        const double* W = w.data() + lay.weight_offset;
        if (!grad_w.empty()) {
            double* gW = grad_w.data() + lay.weight_offset;
            double* gb = grad_w.data() + lay.bias_offset;
            for (std::size_t r = 0; r < lay.out; ++r) {
                for (std::size_t c = 0; c < lay.in; ++c) gW[r * lay.in + c] += delta[r] * in[c];
                gb[r] += delta[r];
            }
        }
        next.assign(lay.in, 0.0);
        for (std::size_t r = 0; r < lay.out; ++r)
            for (std::size_t c = 0; c < lay.in; ++c) next[c] += W[r * lay.in + c] * delta[r];
        delta.swap(next);
    }
    return delta;
}

} // namespace reachcert

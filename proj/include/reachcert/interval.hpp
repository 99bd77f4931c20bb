#pragma once

// Interval arithmetic and interval bound propagation (IBP) through networks
// whose inputs and/or weights are only known to lie in axis-aligned boxes.

#include "reachcert/nn.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachcert {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    Interval() = default;
    Interval(double l, double h) : lo(l), hi(h) {
        if (!(l <= h)) throw std::invalid_argument("interval lower bound exceeds upper bound");
    }
    static Interval point(double v) { return {v, v}; }

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double v) const { return lo <= v && v <= hi; }
    bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
    bool intersects(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
    bool operator==(const Interval&) const = default;
};

/// Axis-aligned hyperrectangle; one closed interval per dimension.
class Box {
public:
    Box() = default;
    explicit Box(std::vector<Interval> dims) : dims_(std::move(dims)) {}
    Box(std::span<const double> lo, std::span<const double> hi) {
        if (lo.size() != hi.size()) throw std::invalid_argument("box bounds differ in dimension");
        dims_.reserve(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i) dims_.emplace_back(lo[i], hi[i]);
    }
    static Box point(std::span<const double> x) {
        std::vector<Interval> d;
        d.reserve(x.size());
        for (double v : x) d.push_back(Interval::point(v));
        return Box(std::move(d));
    }

    std::size_t size() const { return dims_.size(); }
    bool empty() const { return dims_.empty(); }
    Interval& operator[](std::size_t i) { return dims_[i]; }
    const Interval& operator[](std::size_t i) const { return dims_[i]; }
    const std::vector<Interval>& dims() const { return dims_; }
    auto begin() const { return dims_.begin(); }
    auto end() const { return dims_.end(); }

    std::vector<double> lower() const {
        std::vector<double> v(dims_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = dims_[i].lo;
        return v;
    }
    std::vector<double> upper() const {
        std::vector<double> v(dims_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = dims_[i].hi;
        return v;
    }
    std::vector<double> center() const {
        std::vector<double> v(dims_.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = dims_[i].mid();
        return v;
    }

    bool contains(std::span<const double> x) const {
        if (x.size() != dims_.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i)
            if (!dims_[i].contains(x[i])) return false;
        return true;
    }
    bool contains(const Box& o) const {
        if (o.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (!dims_[i].contains(o[i])) return false;
        return true;
    }
    bool intersects(const Box& o) const {
        if (o.size() != size()) return false;
        for (std::size_t i = 0; i < size(); ++i)
            if (!dims_[i].intersects(o[i])) return false;
        return true;
    }

    /// Cartesian product: this box followed by `tail`.
    Box concat(const Box& tail) const {
        auto d = dims_;
        d.insert(d.end(), tail.dims_.begin(), tail.dims_.end());
        return Box(std::move(d));
    }

    bool operator==(const Box&) const = default;

private:
    std::vector<Interval> dims_;
};

/// Axis-aligned box in weight space, [lower, upper] per parameter.
struct WeightBox {
    std::vector<double> lower;
    std::vector<double> upper;

    WeightBox() = default;
    WeightBox(std::vector<double> lo, std::vector<double> hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size()) throw std::invalid_argument("weight box bounds differ in length");
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (!(lower[i] <= upper[i]))
                throw std::invalid_argument("weight box lower bound exceeds upper bound at index " +
                                            std::to_string(i));
    }
    /// [centre - radius, centre + radius] with a per-parameter radius.
    static WeightBox around(std::span<const double> centre, std::span<const double> radius) {
        if (centre.size() != radius.size()) throw std::invalid_argument("radius length mismatch");
        std::vector<double> lo(centre.size()), hi(centre.size());
        for (std::size_t i = 0; i < centre.size(); ++i) {
            lo[i] = centre[i] - radius[i];
            hi[i] = centre[i] + radius[i];
        }
        return WeightBox(std::move(lo), std::move(hi));
    }
    static WeightBox point(std::span<const double> w) {
        return WeightBox(std::vector<double>(w.begin(), w.end()), std::vector<double>(w.begin(), w.end()));
    }

    std::size_t size() const { return lower.size(); }
    bool contains(std::span<const double> w) const {
        if (w.size() != lower.size()) return false;
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i] < lower[i] || w[i] > upper[i]) return false;
        return true;
    }
    /// Closed boxes: touching faces count as overlap.
    bool overlaps(const WeightBox& o) const {
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (upper[i] < o.lower[i] || o.upper[i] < lower[i]) return false;
        return true;
    }
};

namespace detail {

inline void check_input_box(const Architecture& arch, const Box& input) {
    if (input.size() != arch.input_dim())
        throw std::invalid_argument("input box has " + std::to_string(input.size()) + " dims, network expects " +
                                    std::to_string(arch.input_dim()));
}

inline void activate_box(const Architecture& arch, std::size_t layer, std::vector<double>& lo,
                         std::vector<double>& hi) {
    if (!arch.is_hidden(layer)) return;
    const auto a = arch.hidden_activation();
    for (std::size_t r = 0; r < lo.size(); ++r) {
        lo[r] = activate(a, lo[r]);
        hi[r] = activate(a, hi[r]);
    }
}

inline Box to_box(const std::vector<double>& lo, const std::vector<double>& hi) {
    std::vector<Interval> d(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        d[i].lo = lo[i];
        d[i].hi = hi[i];
    }
    return Box(std::move(d));
}

} // namespace detail

/// Output box of the network for every input in `input` and every weight
/// vector in `wbox`. Each product of interval endpoints takes the min/max of
/// the four endpoint products; activations are monotone and applied per
/// endpoint.
inline Box ibp_weight_box(const Architecture& arch, const WeightBox& wbox, const Box& input) {
    if (wbox.size() != arch.n_params()) throw std::invalid_argument("weight box does not match architecture");
    detail::check_input_box(arch, input);
    std::vector<double> lo = input.lower(), hi = input.upper();
    std::vector<double> nlo, nhi;
    for (std::size_t l = 0; l < arch.n_layers(); ++l) {
        const auto& lay = arch.layer(l);
        nlo.assign(lay.out, 0.0);
        nhi.assign(lay.out, 0.0);
        const double* WL = wbox.lower.data() + lay.weight_offset;
        const double* WU = wbox.upper.data() + lay.weight_offset;
        for (std::size_t r = 0; r < lay.out; ++r) {
            double slo = 0.0, shi = 0.0;
            for (std::size_t c = 0; c < lay.in; ++c) {
                const double a = WL[r * lay.in + c], b = WU[r * lay.in + c];
                const double p1 = a * lo[c], p2 = a * hi[c], p3 = b * lo[c], p4 = b * hi[c];
                slo += std::min(std::min(p1, p2), std::min(p3, p4));
                shi += std::max(std::max(p1, p2), std::max(p3, p4));
            }
            slo += wbox.lower[lay.bias_offset + r];
            shi += wbox.upper[lay.bias_offset + r];
            nlo[r] = slo;
            nhi[r] = shi;
        }
        detail::activate_box(arch, l, nlo, nhi);
        lo.swap(nlo);
        hi.swap(nhi);
    }
    return detail::to_box(lo, hi);
}

namespace detail {

/// Fixed-weight propagation of [lo, hi] through layers first..end, in place.
/// `lo`/`hi` hold the activations entering layer `first`.
inline void ibp_fixed_layers(const Architecture& arch, std::span<const double> w, std::size_t first,
                             std::vector<double>& lo, std::vector<double>& hi) {
    std::vector<double> nlo, nhi;
    for (std::size_t l = first; l < arch.n_layers(); ++l) {
        const auto& lay = arch.layer(l);
        nlo.assign(lay.out, 0.0);
        nhi.assign(lay.out, 0.0);
        const double* W = w.data() + lay.weight_offset;
        for (std::size_t r = 0; r < lay.out; ++r) {
            double slo = 0.0, shi = 0.0;
            for (std::size_t c = 0; c < lay.in; ++c) {
                const double p1 = W[r * lay.in + c] * lo[c], p2 = W[r * lay.in + c] * hi[c];
                slo += std::min(p1, p2);
                shi += std::max(p1, p2);
            }
            slo += w[lay.bias_offset + r];
            shi += w[lay.bias_offset + r];
            nlo[r] = slo;
            nhi[r] = shi;
        }
        activate_box(arch, l, nlo, nhi);
        lo.swap(nlo);
        hi.swap(nhi);
    }
}

} // namespace detail

/// Output box for fixed weights. Bit-identical to ibp_weight_box with a
/// degenerate weight box.
inline Box ibp_fixed_weights(const Architecture& arch, std::span<const double> w, const Box& input) {
    if (w.size() != arch.n_params()) throw std::invalid_argument("weight vector does not match architecture");
    detail::check_input_box(arch, input);
    std::vector<double> lo = input.lower(), hi = input.upper();
    detail::ibp_fixed_layers(arch, w, 0, lo, hi);
    return detail::to_box(lo, hi);
}

inline Box ibp_fixed_weights(const Architecture& arch, const WeightSet& w, const Box& input) {
    return ibp_fixed_weights(arch, std::span<const double>(w.values), input);
}

/// Widens every dimension by `eps` on both sides.
inline Box add_noise_margin(const Box& box, double eps) {
    if (!(eps >= 0.0)) throw std::invalid_argument("noise margin must be non-negative");
    std::vector<Interval> d(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) {
        d[i].lo = box[i].lo - eps;
        d[i].hi = box[i].hi + eps;
    }
    return Box(std::move(d));
}

/// Inverse error function (Boost.Math, full double precision).
inline double erf_inverse(double p) { return boost::math::erf_inv(p); }

/// Half-width eps such that a N(0, sigma^2) scalar lies in [-eps, eps] with
/// probability eta: eps = sqrt(2 sigma^2) * erfinv(eta).
inline double epsilon_for(double eta, double sigma) {
    if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("eta must lie in (0, 1)");
    if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
    return std::sqrt(2.0 * sigma * sigma) * erf_inverse(eta);
}

// Differentiable IBP for fixed weights, used by the robust policy loss. The
// bounds use the sign of each weight to select the endpoint, which gives the
// same numbers as ibp_fixed_weights.

struct IntervalTrace {
    std::vector<std::vector<double>> lo, hi;         // lo[0]/hi[0] = input box
    std::vector<std::vector<double>> pre_lo, pre_hi; // per-layer pre-activation bounds
};

inline void ibp_fixed_traced(const Architecture& arch, std::span<const double> w, std::span<const double> in_lo,
                             std::span<const double> in_hi, IntervalTrace& t) {
    if (w.size() != arch.n_params()) throw std::invalid_argument("weight vector does not match architecture");
    if (in_lo.size() != arch.input_dim() || in_hi.size() != arch.input_dim())
        throw std::invalid_argument("input box does not match architecture");
    const auto nl = arch.n_layers();
    t.lo.resize(nl + 1);
    t.hi.resize(nl + 1);
    t.pre_lo.resize(nl);
    t.pre_hi.resize(nl);
    t.lo[0].assign(in_lo.begin(), in_lo.end());
    t.hi[0].assign(in_hi.begin(), in_hi.end());
    for (std::size_t l = 0; l < nl; ++l) {
        const auto& lay = arch.layer(l);
        const double* W = w.data() + lay.weight_offset;
        const auto& lo = t.lo[l];
        const auto& hi = t.hi[l];
        auto& plo = t.pre_lo[l];
        auto& phi = t.pre_hi[l];
        plo.resize(lay.out);
        phi.resize(lay.out);
        for (std::size_t r = 0; r < lay.out; ++r) {
            double slo = 0.0, shi = 0.0;
            for (std::size_t c = 0; c < lay.in; ++c) {
                const double wc = W[r * lay.in + c];
                if (wc >= 0.0) {
                    slo += wc * lo[c];
                    shi += wc * hi[c];
                } else {
                    slo += wc * hi[c];
                    shi += wc * lo[c];
                }
            }
            slo += w[lay.bias_offset + r];
            shi += w[lay.bias_offset + r];
            plo[r] = slo;
            phi[r] = shi;
        }
        t.lo[l + 1] = plo;
        t.hi[l + 1] = phi;
        detail::activate_box(arch, l, t.lo[l + 1], t.hi[l + 1]);
    }
}

/// Reverse pass of ibp_fixed_traced. Accumulates into grad_w (if non-empty)
/// and writes the gradients with respect to the input bounds.
inline void ibp_fixed_backward(const Architecture& arch, std::span<const double> w, const IntervalTrace& t,
                               std::span<const double> g_out_lo, std::span<const double> g_out_hi,
                               std::span<double> grad_w, std::vector<double>& g_in_lo, std::vector<double>& g_in_hi) {
    std::vector<double> glo(g_out_lo.begin(), g_out_lo.end()), ghi(g_out_hi.begin(), g_out_hi.end());
    std::vector<double> nlo, nhi;
    for (std::size_t l = arch.n_layers(); l-- > 0;) {
        const auto& lay = arch.layer(l);
        if (arch.is_hidden(l)) {
            const auto a = arch.hidden_activation();
            for (std::size_t r = 0; r < lay.out; ++r) {
                glo[r] *= activate_derivative(a, t.pre_lo[l][r], t.lo[l + 1][r]);
                ghi[r] *= activate_derivative(a, t.pre_hi[l][r], t.hi[l + 1][r]);
            }
        }
        const double* W = w.data() + lay.weight_offset;
        const auto& lo = t.lo[l];
        const auto& hi = t.hi[l];
        nlo.assign(lay.in, 0.0);
        nhi.assign(lay.in, 0.0);
        for (std::size_t r = 0; r < lay.out; ++r) {
            for (std::size_t c = 0; c < lay.in; ++c) {
                const double wc = W[r * lay.in + c];
                if (wc >= 0.0) {
                    if (!grad_w.empty()) grad_w[lay.weight_offset + r * lay.in + c] += glo[r] * lo[c] + ghi[r] * hi[c];
                    nlo[c] += glo[r] * wc;
                    nhi[c] += ghi[r] * wc;
                } else {
                    if (!grad_w.empty()) grad_w[lay.weight_offset + r * lay.in + c] += glo[r] * hi[c] + ghi[r] * lo[c];
                    nhi[c] += glo[r] * wc;
                    nlo[c] += ghi[r] * wc;
                }
            }
            if (!grad_w.empty()) grad_w[lay.bias_offset + r] += glo[r] + ghi[r];
        }
        glo.swap(nlo);
        ghi.swap(nhi);
    }
    g_in_lo = std::move(glo);
    g_in_hi = std::move(ghi);
}

} // namespace reachcert

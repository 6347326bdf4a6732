#ifndef GRADLAB_TEST_SUPPORT_HPP
#define GRADLAB_TEST_SUPPORT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "gradlab/diffnet.hpp"
#include "gradlab/tensor.hpp"

namespace gradlab::testing {

// L(x) = w . x; the ascent direction is the constant w.
struct LinearObjective {
    Tensor w;
    long calls = 0;

    Tensor gradient(const Tensor&)
    {
        ++calls;
        return w;
    }
    double loss(const Tensor& x) const { return dot(w, x); }
};

// L(x) = 0.5 x^T A x + b . x in two dimensions, A symmetric.
struct Quadratic2 {
    std::array<double, 4> a{}; // row-major 2x2
    std::array<double, 2> b{};

    std::array<double, 2> grad(const std::array<double, 2>& x) const
    {
        return {a[0] * x[0] + a[1] * x[1] + b[0], a[2] * x[0] + a[3] * x[1] + b[1]};
    }
    double value(const std::array<double, 2>& x) const
    {
        return 0.5 * (x[0] * (a[0] * x[0] + a[1] * x[1]) + x[1] * (a[2] * x[0] + a[3] * x[1])) + b[0] * x[0] +
               b[1] * x[1];
    }
};

struct QuadraticObjective {
    Quadratic2 q;
    long calls = 0;

    Tensor gradient(const Tensor& x)
    {
        ++calls;
        const auto g = q.grad({x[0], x[1]});
        return Tensor::vector({g[0], g[1]});
    }
    double loss(const Tensor& x) const { return q.value({x[0], x[1]}); }
};

// Curved enough that gradient signs flip along typical attack paths.
inline Quadratic2 saddle_quadratic()
{
    return Quadratic2{{-8.0, 1.2, 1.2, 2.0}, {3.0, -0.35}};
}

inline Network random_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed, double bias_scale = 0.1)
{
    Rng rng(seed);
    Network net = Network::mlp(widths, rng);
    for (auto& layer : net.mutable_layers())
        if (auto* a = std::get_if<Affine>(&layer))
            for (double& b : a->bias) b = bias_scale * rng.normal();
    return net;
}

inline Tensor random_input(std::size_t d, std::uint64_t seed, double lo = 0.05, double hi = 0.95)
{
    Rng rng(seed);
    Tensor x({d});
    for (double& v : x) v = rng.uniform(lo, hi);
    return x;
}

// Largest |a - b| / max(|a|, |b|, floor) over components.
inline double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-6)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

template <class F>
Tensor central_difference(F&& f, const Tensor& x, double h)
{
    Tensor g = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

// True when no ReLU pre-activation lies within `margin` of zero, so finite differences
// with a smaller step do not straddle a kink.
inline bool away_from_kinks(const Network& net, const Tensor& x, double margin)
{
    const auto fr = forward(net, x);
    const auto& layers = net.layers();
    for (std::size_t li = 0; li < layers.size(); ++li)
        if (std::holds_alternative<Relu>(layers[li]))
            for (double v : fr.tape.acts[li])
                if (std::abs(v) < margin) return false;
    return true;
}

// Cross-entropy as a function of the (pre-mask) feature activations.
inline double head_loss(const Network& net, const Tensor& f, int y)
{
    std::vector<double> h = f.raw();
    if (const auto& m = net.prune_mask())
        for (std::size_t i = 0; i < h.size(); ++i) h[i] *= (*m)[i];
    const auto& layers = net.layers();
    for (std::size_t li = net.feature_layer_index() + 1; li < layers.size(); ++li) {
        if (const auto* a = std::get_if<Affine>(&layers[li])) {
            std::vector<double> out(a->out());
            for (std::size_t o = 0; o < a->out(); ++o) {
                double s = a->bias[o];
                for (std::size_t i = 0; i < a->in(); ++i) s += a->weight[o * a->in() + i] * h[i];
                out[o] = s;
            }
            h = std::move(out);
        } else {
            for (double& v : h) v = std::max(v, 0.0);
        }
    }
    return loss_ce(h, y);
}

inline Tensor raw_features(const Network& net, const Tensor& x)
{
    return features(net.without_mask(), x);
}

struct GradCheck {
    double input_ce = 0.0;
    double input_fia = 0.0;
    double feature = 0.0;
    int probes = 0;

    double worst() const { return std::max({input_ce, input_fia, feature}); }
};

// Central-difference check of grad_input (CE and FIA) and grad_feature at random probes
// that sit away from ReLU kinks.
inline GradCheck gradient_check(const std::vector<std::size_t>& widths, int probes, std::uint64_t seed,
                                double h = 1e-5)
{
    GradCheck out;
    Rng rng(seed);
    const Network net = random_mlp(widths, seed);
    const int classes = static_cast<int>(widths.back());
    while (out.probes < probes) {
        const Tensor x = random_input(widths.front(), rng());
        if (!away_from_kinks(net, x, 1e-3)) continue;
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        Tensor delta({net.feature_width()});
        for (double& d : delta) d = rng.normal();
        const Loss fia = Loss::fia(delta);

        const Tensor g_ce = grad_input(net, x, y);
        const Tensor fd_ce = central_difference([&](const Tensor& p) { return loss_value(net, p, y); }, x, h);
        out.input_ce = std::max(out.input_ce, max_relative_error(g_ce, fd_ce));

        const Tensor g_fia = grad_input(net, x, y, fia);
        const Tensor fd_fia =
            central_difference([&](const Tensor& p) { return loss_value(net, p, y, fia); }, x, h);
        out.input_fia = std::max(out.input_fia, max_relative_error(g_fia, fd_fia));

        const Tensor f = raw_features(net, x);
        const Tensor g_f = grad_feature(net, x, y);
        const Tensor fd_f = central_difference([&](const Tensor& p) { return head_loss(net, p, y); }, f, h);
        out.feature = std::max(out.feature, max_relative_error(g_f, fd_f));
        ++out.probes;
    }
    return out;
}

} // namespace gradlab::testing

#endif // GRADLAB_TEST_SUPPORT_HPP

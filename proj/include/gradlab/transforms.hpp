#ifndef GRADLAB_TRANSFORMS_HPP
#define GRADLAB_TRANSFORMS_HPP

#include <cmath>
#include <concepts>
#include <string>
#include <string_view>
#include <vector>

#include "gradlab/tensor.hpp"

namespace gradlab {

enum class TransformKind { None, Dim, Sim, Tim };

inline std::string_view transform_name(TransformKind k)
{
    switch (k) {
    case TransformKind::None: return "none";
    case TransformKind::Dim: return "dim";
    case TransformKind::Sim: return "sim";
    case TransformKind::Tim: return "tim";
    }
    return "?";
}

inline TransformKind parse_transform(std::string_view s)
{
    for (auto k : {TransformKind::None, TransformKind::Dim, TransformKind::Sim, TransformKind::Tim})
        if (transform_name(k) == s) return k;
    throw Error("unknown transform '" + std::string(s) + "'");
}

struct TransformConfig {
    TransformKind kind = TransformKind::None;
    double dim_probability = 0.5;
    // Resize range [low, high); 0 means native and native + ceil(0.18 * native).
    std::size_t dim_low = 0;
    std::size_t dim_high = 0;
    int sim_copies = 5;
    int tim_kernel_size = 7;
    double tim_sigma = 0.0; // 0 means kernel_size / 3

    void validate() const
    {
        if (!(dim_probability >= 0.0 && dim_probability <= 1.0)) throw Error("dim_probability must be in [0, 1]");
        if (sim_copies < 1) throw Error("sim_copies must be at least 1");
        if (tim_kernel_size < 1 || tim_kernel_size % 2 == 0) throw Error("tim kernel size must be odd and positive");
    }

    std::size_t low(std::size_t native) const { return dim_low ? dim_low : native; }
    std::size_t high(std::size_t native) const
    {
        return dim_high ? dim_high
                        : native + static_cast<std::size_t>(std::ceil(static_cast<double>(native) * 0.18));
    }
    double sigma() const { return tim_sigma > 0.0 ? tim_sigma : tim_kernel_size / 3.0; }
};

struct ImageGeometry {
    std::size_t height = 0;
    std::size_t width = 0;
};

template <class F>
concept GradientFn = requires(F& f, const Tensor& x) { { f(x) } -> std::convertible_to<Tensor>; };

// Resize-and-pad as an index map: out[i] = in[source[i]], or 0 where source[i] < 0.
struct PixelMap {
    std::size_t out_h = 0, out_w = 0;
    std::vector<long> source;

    Tensor apply(const Tensor& in) const
    {
        Tensor out({out_h * out_w});
        for (std::size_t i = 0; i < source.size(); ++i)
            if (source[i] >= 0) out[i] = in[static_cast<std::size_t>(source[i])];
        return out;
    }

    // Adjoint (transpose) of apply.
    Tensor adjoint(const Tensor& grad_out, std::size_t in_size) const
    {
        Tensor g({in_size});
        for (std::size_t i = 0; i < source.size(); ++i)
            if (source[i] >= 0) g[static_cast<std::size_t>(source[i])] += grad_out[i];
        return g;
    }

    // this after first: (this ∘ first)(x) = this(first(x)).
    PixelMap after(const PixelMap& first) const
    {
        PixelMap m{out_h, out_w, std::vector<long>(source.size(), -1)};
        for (std::size_t i = 0; i < source.size(); ++i)
            if (source[i] >= 0) m.source[i] = first.source[static_cast<std::size_t>(source[i])];
        return m;
    }
};

inline PixelMap nearest_resize(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w)
{
    PixelMap m{out_h, out_w, std::vector<long>(out_h * out_w)};
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            const std::size_t sy = std::min(in_h - 1, y * in_h / out_h);
            const std::size_t sx = std::min(in_w - 1, x * in_w / out_w);
            m.source[y * out_w + x] = static_cast<long>(sy * in_w + sx);
        }
    return m;
}

inline PixelMap zero_pad(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w,
                         std::size_t top, std::size_t left)
{
    PixelMap m{out_h, out_w, std::vector<long>(out_h * out_w, -1)};
    for (std::size_t y = 0; y < in_h; ++y)
        for (std::size_t x = 0; x < in_w; ++x)
            m.source[(y + top) * out_w + (x + left)] = static_cast<long>(y * in_w + x);
    return m;
}

struct DimSample {
    bool transformed = false;
    std::size_t resized = 0;  // side after the random resize
    Tensor intermediate;      // padded image, high x high
    PixelMap to_intermediate; // native -> padded
    PixelMap to_input;        // native -> network input (padded image resized back to native)
};

// Draws the random resize/pad for one gradient evaluation.
inline DimSample dim_sample(const Tensor& x, ImageGeometry geo, const TransformConfig& cfg, Rng& rng)
{
    DimSample s;
    const std::size_t native = geo.height;
    if (geo.height != geo.width) throw ShapeError("DIM expects square images");
    s.transformed = rng.uniform() < cfg.dim_probability;
    if (!s.transformed) return s;
    const std::size_t low = cfg.low(native), high = cfg.high(native);
    if (low >= high) throw Error("DIM resize range is empty");
    s.resized = low + rng.below(high - low);
    const std::size_t room = high - s.resized;
    const std::size_t top = rng.below(room + 1);
    const std::size_t left = rng.below(room + 1);
    const PixelMap resize = nearest_resize(native, native, s.resized, s.resized);
    const PixelMap pad = zero_pad(s.resized, s.resized, high, high, top, left);
    s.to_intermediate = pad.after(resize);
    s.to_input = nearest_resize(high, high, native, native).after(s.to_intermediate);
    s.intermediate = s.to_intermediate.apply(x);
    return s;
}

// Gradient through a random resize-and-pad with probability p, else the plain gradient.
template <GradientFn F>
Tensor dim_gradient(F&& grad_fn, const Tensor& x, ImageGeometry geo, const TransformConfig& cfg, Rng& rng)
{
    const DimSample s = dim_sample(x, geo, cfg, rng);
    if (!s.transformed) return grad_fn(x);
    const Tensor g = grad_fn(s.to_input.apply(x));
    return s.to_input.adjoint(g, x.size()).reshaped(x.shape());
}

// (1/m) * sum_i d/dx L(x / 2^i), including the 2^-i chain factor.
template <GradientFn F>
Tensor sim_gradient(F&& grad_fn, const Tensor& x, const TransformConfig& cfg)
{
    Tensor acc = Tensor::zeros_like(x);
    double scale = 1.0;
    for (int i = 0; i < cfg.sim_copies; ++i) {
        const Tensor g = grad_fn(scale * x);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += scale * g[j];
        scale *= 0.5;
    }
    for (double& v : acc) v /= static_cast<double>(cfg.sim_copies);
    return acc;
}

// Normalized size x size Gaussian kernel, row-major.
inline std::vector<double> gaussian_kernel(int size, double sigma)
{
    if (size < 1 || size % 2 == 0) throw Error("kernel size must be odd and positive");
    const int c = size / 2;
    std::vector<double> k(static_cast<std::size_t>(size * size));
    double total = 0.0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double r2 = static_cast<double>((y - c) * (y - c) + (x - c) * (x - c));
            total += k[static_cast<std::size_t>(y * size + x)] = std::exp(-r2 / (2.0 * sigma * sigma));
        }
    for (double& v : k) v /= total;
    return k;
}

// 2-D convolution with replicate padding.
inline Tensor gaussian_smooth(const Tensor& g, ImageGeometry geo, int size, double sigma)
{
    if (static_cast<std::size_t>(size) > geo.height || static_cast<std::size_t>(size) > geo.width)
        throw ShapeError("smoothing kernel larger than the image");
    if (g.size() != geo.height * geo.width) throw ShapeError("gradient does not match image geometry");
    const auto k = gaussian_kernel(size, sigma);
    const long c = size / 2;
    const long h = static_cast<long>(geo.height), w = static_cast<long>(geo.width);
    Tensor out = Tensor::zeros_like(g);
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x) {
            double s = 0.0;
            for (long dy = -c; dy <= c; ++dy)
                for (long dx = -c; dx <= c; ++dx) {
                    const long sy = std::clamp(y - dy, 0L, h - 1);
                    const long sx = std::clamp(x - dx, 0L, w - 1);
                    s += k[static_cast<std::size_t>((dy + c) * size + (dx + c))] * g[static_cast<std::size_t>(sy * w + sx)];
                }
            out[static_cast<std::size_t>(y * w + x)] = s;
        }
    return out;
}

template <GradientFn F>
Tensor tim_gradient(F&& grad_fn, const Tensor& x, ImageGeometry geo, const TransformConfig& cfg)
{
    return gaussian_smooth(grad_fn(x), geo, cfg.tim_kernel_size, cfg.sigma());
}

// Backward passes consumed by one transformed gradient evaluation.
inline long transform_cost(const TransformConfig& cfg)
{
    return cfg.kind == TransformKind::Sim ? cfg.sim_copies : 1;
}

} // namespace gradlab

#endif // GRADLAB_TRANSFORMS_HPP

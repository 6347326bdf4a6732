#ifndef GRADLAB_TENSOR_HPP
#define GRADLAB_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gradlab {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill)
    {
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_size(shape_) != data_.size())
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor vector(std::vector<double> values)
    {
        Shape s{values.size()};
        return Tensor(std::move(s), std::move(values));
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::vector<double>& raw() { return data_; }
    const std::vector<double>& raw() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    Tensor reshaped(Shape shape) const
    {
        if (shape_size(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline double sign(double v)
{
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

inline Tensor sign(const Tensor& t)
{
    Tensor out = Tensor::zeros_like(t);
    std::transform(t.begin(), t.end(), out.begin(), [](double v) { return sign(v); });
    return out;
}

inline double l1_norm(const Tensor& t)
{
    double s = 0.0;
    for (double v : t) s += std::abs(v);
    return s;
}

inline double l2_norm(const Tensor& t)
{
    double s = 0.0;
    for (double v : t) s += v * v;
    return std::sqrt(s);
}

inline double linf_norm(const Tensor& t)
{
    double m = 0.0;
    for (double v : t) m = std::max(m, std::abs(v));
    return m;
}

inline double dot(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double linf_distance(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "linf_distance");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Cosine similarity; pairs involving a zero vector give 0.
inline double cosine(const Tensor& a, const Tensor& b)
{
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

inline constexpr double kNormFloor = 1e-12;

inline Tensor l1_normalize(const Tensor& t)
{
    const double denom = std::max(l1_norm(t), kNormFloor);
    Tensor out = Tensor::zeros_like(t);
    std::transform(t.begin(), t.end(), out.begin(), [denom](double v) { return v / denom; });
    return out;
}

inline Tensor l2_normalize(const Tensor& t)
{
    const double denom = std::max(l2_norm(t), kNormFloor);
    Tensor out = Tensor::zeros_like(t);
    std::transform(t.begin(), t.end(), out.begin(), [denom](double v) { return v / denom; });
    return out;
}

inline constexpr double kPixelMin = 0.0;
inline constexpr double kPixelMax = 1.0;

// Projection onto the eps-ball (infinity norm) around center, intersected with the pixel box.
inline Tensor clip_ball(const Tensor& center, double eps, const Tensor& v)
{
    require_same_shape(center, v, "clip_ball");
    if (!(eps >= 0.0)) throw Error("clip_ball: eps must be non-negative");
    Tensor out = Tensor::zeros_like(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        double lo = center[i] - eps;
        double hi = center[i] + eps;
        // keep (bound - center) within eps after rounding
        while (hi - center[i] > eps) hi = std::nextafter(hi, center[i]);
        while (center[i] - lo > eps) lo = std::nextafter(lo, center[i]);
        out[i] = std::clamp(std::clamp(v[i], lo, hi), kPixelMin, kPixelMax);
    }
    return out;
}

inline Tensor clip_pixels(const Tensor& v)
{
    Tensor out = Tensor::zeros_like(v);
    std::transform(v.begin(), v.end(), out.begin(),
                   [](double p) { return std::clamp(p, kPixelMin, kPixelMax); });
    return out;
}

// out = a + s * b
inline Tensor axpy(const Tensor& a, double s, const Tensor& b)
{
    require_same_shape(a, b, "axpy");
    Tensor out = Tensor::zeros_like(a);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s * b[i];
    return out;
}

// out = s * a + b
inline Tensor scale_add(double s, const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "scale_add");
    Tensor out = Tensor::zeros_like(a);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i] + b[i];
    return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b)
{
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
    return out;
}

inline Tensor operator*(double s, const Tensor& a)
{
    Tensor out = a;
    for (double& v : out) v *= s;
    return out;
}

inline bool all_finite(const Tensor& t)
{
    return std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); });
}

inline bool all_nonzero(const Tensor& t)
{
    return std::all_of(t.begin(), t.end(), [](double v) { return v != 0.0; });
}

// splitmix64, used both as a seed expander and as a mixing hash.
inline std::uint64_t splitmix64(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt)
{
    std::uint64_t s = seed ^ (salt * 0xd1b54a32d192ed03ULL);
    splitmix64(s);
    return splitmix64(s);
}

// FNV-1a of the role string, mixed with the seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : role) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return mix_seed(seed, h);
}

// xoshiro256** seeded through splitmix64.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed)
    {
        std::uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64(sm);
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()()
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        if (n == 0) throw Error("Rng::below: empty range");
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do {
            r = (*this)();
        } while (r >= limit);
        return r % n;
    }

    // Box-Muller; no cached second value so the stream depends only on call count.
    double normal()
    {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
};

// Each component iid uniform in [-radius, radius].
inline Tensor uniform_ball_sample(Rng& rng, const Shape& shape, double radius)
{
    if (!(radius >= 0.0)) throw Error("uniform_ball_sample: radius must be non-negative");
    Tensor out(shape);
    for (double& v : out) v = radius * (2.0 * rng.uniform() - 1.0);
    return out;
}

} // namespace gradlab

#endif // GRADLAB_TENSOR_HPP

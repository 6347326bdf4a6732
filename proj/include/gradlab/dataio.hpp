#ifndef GRADLAB_DATAIO_HPP
#define GRADLAB_DATAIO_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "gradlab/tensor.hpp"

namespace gradlab {

struct Dataset {
    Tensor images; // [n, h, w], values in [0, 1]
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t height() const { return images.shape().size() == 3 ? images.shape()[1] : 0; }
    std::size_t width() const { return images.shape().size() == 3 ? images.shape()[2] : 0; }
    std::size_t pixels() const { return height() * width(); }

    // Flattened copy of one image.
    Tensor image(std::size_t i) const
    {
        const std::size_t d = pixels();
        std::vector<double> v(images.raw().begin() + static_cast<std::ptrdiff_t>(i * d),
                              images.raw().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
        return Tensor({d}, std::move(v));
    }

    // Examples [begin, end).
    Dataset slice(std::size_t begin, std::size_t end) const
    {
        end = std::min(end, size());
        begin = std::min(begin, end);
        const std::size_t d = pixels();
        Dataset out;
        out.class_count = class_count;
        out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                          labels.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<double> v(images.raw().begin() + static_cast<std::ptrdiff_t>(begin * d),
                              images.raw().begin() + static_cast<std::ptrdiff_t>(end * d));
        out.images = Tensor({end - begin, height(), width()}, std::move(v));
        return out;
    }
};

enum class IdxErrorKind { Io, BadMagic, Truncated, CountMismatch, BadLabel };

class IdxError : public Error {
public:
    IdxError(IdxErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    IdxErrorKind kind() const { return kind_; }

private:
    IdxErrorKind kind_;
};

namespace idx {

inline constexpr std::uint8_t kUnsignedByte = 0x08;

struct Array {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

inline std::uint32_t read_be32(const std::uint8_t* p)
{
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
           std::uint32_t{p[3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses an unsigned-byte IDX array of the expected rank.
inline Array parse(const std::vector<std::uint8_t>& bytes, std::uint8_t expected_rank,
                   const std::string& name)
{
    if (bytes.size() < 4) throw IdxError(IdxErrorKind::Truncated, name + ": missing magic");
    if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != kUnsignedByte || bytes[3] != expected_rank)
        throw IdxError(IdxErrorKind::BadMagic, name + ": unexpected IDX magic");
    const std::size_t header = 4 + 4 * std::size_t{expected_rank};
    if (bytes.size() < header) throw IdxError(IdxErrorKind::Truncated, name + ": truncated header");
    Array a;
    std::size_t count = 1;
    for (std::size_t r = 0; r < expected_rank; ++r) {
        a.dims.push_back(read_be32(bytes.data() + 4 + 4 * r));
        count *= a.dims.back();
    }
    if (bytes.size() - header < count)
        throw IdxError(IdxErrorKind::Truncated, name + ": truncated data");
    a.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                  bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
    return a;
}

inline std::vector<std::uint8_t> serialize(const Array& a)
{
    std::vector<std::uint8_t> out{0, 0, kUnsignedByte, static_cast<std::uint8_t>(a.dims.size())};
    for (auto d : a.dims) write_be32(out, d);
    out.insert(out.end(), a.data.begin(), a.data.end());
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IdxError(IdxErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace idx

// Class count is one past the largest label seen.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path)
{
    const auto images = idx::parse(idx::read_file(images_path), 3, images_path.string());
    const auto labels = idx::parse(idx::read_file(labels_path), 1, labels_path.string());
    if (images.dims[0] != labels.dims[0])
        throw IdxError(IdxErrorKind::CountMismatch,
                       "image count " + std::to_string(images.dims[0]) + " != label count " +
                           std::to_string(labels.dims[0]));
    Dataset ds;
    std::vector<double> px(images.data.size());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = images.data[i] / 255.0;
    ds.images = Tensor({images.dims[0], images.dims[1], images.dims[2]}, std::move(px));
    int max_label = -1;
    for (auto l : labels.data) {
        ds.labels.push_back(l);
        max_label = std::max(max_label, int{l});
    }
    ds.class_count = max_label + 1;
    return ds;
}

// Pixels are quantized back to bytes with rounding.
inline void save_idx(const Dataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path)
{
    idx::Array images;
    images.dims = {static_cast<std::uint32_t>(ds.size()), static_cast<std::uint32_t>(ds.height()),
                   static_cast<std::uint32_t>(ds.width())};
    for (double v : ds.images) images.data.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    idx::Array labels;
    labels.dims = {static_cast<std::uint32_t>(ds.size())};
    for (int l : ds.labels) {
        if (l < 0 || l > 255) throw IdxError(IdxErrorKind::BadLabel, "label does not fit in a byte");
        labels.data.push_back(static_cast<std::uint8_t>(l));
    }
    idx::write_file(images_path, idx::serialize(images));
    idx::write_file(labels_path, idx::serialize(labels));
}

struct BlobOptions {
    int bumps_per_template = 3;   // Gaussian bumps summed into each template
    int modes_per_class = 1;      // templates per class; each sample picks one
    double bump_sigma = 0.18;     // bump width as a fraction of the image side
    double jitter = 0.0;          // max per-sample template shift in pixels
    double noise_sigma = 0.25;    // per-pixel Gaussian noise
    double template_contrast = 0.6;
};

namespace detail {

struct Bump {
    double cy, cx, amp;
};

inline void render_template(const std::vector<Bump>& bumps, double sigma, double peak, double contrast,
                            double dy, double dx, std::size_t h, std::size_t w, double* out)
{
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double v = 0.0;
            for (const auto& b : bumps) {
                const double ry = static_cast<double>(y) + 0.5 - b.cy - dy;
                const double rx = static_cast<double>(x) + 0.5 - b.cx - dx;
                v += b.amp * std::exp(-(rx * rx + ry * ry) / (2.0 * sigma * sigma));
            }
            out[y * w + x] = 0.5 + 0.5 * contrast * v / peak;
        }
}

} // namespace detail

// Class templates are sums of Gaussian bumps. A sample picks one of its class's templates,
// shifts it by a random sub-pixel offset, adds iid pixel noise and is clamped to [0, 1].
// Labels cycle through the classes so every prefix is close to balanced.
inline Dataset synth_blobs(Rng& rng, std::size_t n, int classes, std::size_t h, std::size_t w,
                           const BlobOptions& opt = {})
{
    if (classes <= 0 || h == 0 || w == 0) throw Error("synth_blobs: classes, h, w must be positive");
    if (opt.modes_per_class < 1) throw Error("synth_blobs: modes_per_class must be positive");
    const std::size_t d = h * w;
    const double sigma = opt.bump_sigma * static_cast<double>(std::max(h, w));
    const std::size_t count = static_cast<std::size_t>(classes) * static_cast<std::size_t>(opt.modes_per_class);
    std::vector<std::vector<detail::Bump>> templates(count);
    std::vector<double> peaks(count);
    std::vector<double> scratch(d);
    for (std::size_t t = 0; t < count; ++t) {
        for (int b = 0; b < opt.bumps_per_template; ++b)
            templates[t].push_back({rng.uniform(0.0, static_cast<double>(h)), rng.uniform(0.0, static_cast<double>(w)),
                                    rng.uniform(-1.0, 1.0)});
        detail::render_template(templates[t], sigma, 1.0, 2.0, 0.0, 0.0, h, w, scratch.data());
        double peak = 1e-12;
        for (double v : scratch) peak = std::max(peak, std::abs(v - 0.5));
        peaks[t] = peak;
    }

    Dataset ds;
    ds.class_count = classes;
    std::vector<double> px(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
        ds.labels.push_back(label);
        const std::size_t mode = opt.modes_per_class > 1 ? rng.below(static_cast<std::uint64_t>(opt.modes_per_class)) : 0;
        const std::size_t t = static_cast<std::size_t>(label) * static_cast<std::size_t>(opt.modes_per_class) + mode;
        const double dy = opt.jitter > 0.0 ? rng.uniform(-opt.jitter, opt.jitter) : 0.0;
        const double dx = opt.jitter > 0.0 ? rng.uniform(-opt.jitter, opt.jitter) : 0.0;
        double* out = px.data() + i * d;
        detail::render_template(templates[t], sigma, peaks[t], opt.template_contrast, dy, dx, h, w, out);
        for (std::size_t j = 0; j < d; ++j) out[j] = std::clamp(out[j] + opt.noise_sigma * rng.normal(), 0.0, 1.0);
    }
    ds.images = Tensor({n, h, w}, std::move(px));
    return ds;
}

} // namespace gradlab

#endif // GRADLAB_DATAIO_HPP

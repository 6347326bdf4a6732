#ifndef GRADLAB_DIFFNET_HPP
#define GRADLAB_DIFFNET_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gradlab/tensor.hpp"

namespace gradlab {

struct Affine {
    Tensor weight; // [out, in], row-major
    Tensor bias;   // [out]

    std::size_t in() const { return weight.shape()[1]; }
    std::size_t out() const { return weight.shape()[0]; }
};

struct Relu {};

using Layer = std::variant<Affine, Relu>;

// Feed-forward affine/ReLU stack. Parameters are shared between copies, so a copy with a
// different prune mask is a cheap masked view over the same weights.
class Network {
public:
    Network() = default;

    Network(std::vector<Layer> layers, int class_count, std::size_t feature_layer_index)
        : layers_(std::make_shared<std::vector<Layer>>(std::move(layers))),
          class_count_(class_count),
          feature_layer_index_(feature_layer_index)
    {
        validate();
    }

    // widths = {input, hidden..., classes}; the last hidden ReLU is the feature layer.
    static Network mlp(const std::vector<std::size_t>& widths, Rng& rng)
    {
        if (widths.size() < 3) throw ShapeError("mlp needs at least one hidden layer");
        std::vector<Layer> layers;
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
            Affine a{Tensor({widths[i + 1], widths[i]}), Tensor({widths[i + 1]})};
            const double scale = std::sqrt(2.0 / static_cast<double>(widths[i]));
            for (double& w : a.weight) w = scale * rng.normal();
            layers.emplace_back(std::move(a));
            if (i + 2 < widths.size()) layers.emplace_back(Relu{});
        }
        const std::size_t feature = layers.size() - 2;
        return Network(std::move(layers), static_cast<int>(widths.back()), feature);
    }

    const std::vector<Layer>& layers() const { return *layers_; }

    // Copy-on-write access for training.
    std::vector<Layer>& mutable_layers()
    {
        if (layers_.use_count() > 1) layers_ = std::make_shared<std::vector<Layer>>(*layers_);
        return *layers_;
    }

    int class_count() const { return class_count_; }
    std::size_t feature_layer_index() const { return feature_layer_index_; }
    std::size_t input_dim() const { return std::get<Affine>(layers_->front()).in(); }
    std::size_t feature_width() const { return output_width(feature_layer_index_); }

    std::size_t output_width(std::size_t layer) const
    {
        for (std::size_t i = layer + 1; i-- > 0;)
            if (auto* a = std::get_if<Affine>(&(*layers_)[i])) return a->out();
        return input_dim();
    }

    const std::optional<std::vector<double>>& prune_mask() const { return mask_; }

    Network with_mask(std::vector<double> mask) const
    {
        if (mask.size() != feature_width())
            throw ShapeError("prune mask length " + std::to_string(mask.size()) + " != feature width " +
                             std::to_string(feature_width()));
        for (double m : mask)
            if (m != 0.0 && m != 1.0) throw Error("prune mask entries must be 0 or 1");
        Network view = *this;
        view.mask_ = std::move(mask);
        return view;
    }

    Network without_mask() const
    {
        Network view = *this;
        view.mask_.reset();
        return view;
    }

    std::uint64_t seed = 0;
    nlohmann::json training_meta = nlohmann::json::object();

private:
    void validate() const
    {
        if (!layers_ || layers_->empty()) throw ShapeError("network has no layers");
        if (!std::holds_alternative<Affine>(layers_->front()))
            throw ShapeError("first layer must be affine");
        std::size_t width = 0;
        bool first = true;
        for (const auto& layer : *layers_) {
            if (const auto* a = std::get_if<Affine>(&layer)) {
                if (a->weight.shape().size() != 2 || a->bias.shape() != Shape{a->out()})
                    throw ShapeError("affine layer has malformed parameters");
                if (!first && a->in() != width)
                    throw ShapeError("affine input " + std::to_string(a->in()) + " != previous width " +
                                     std::to_string(width));
                width = a->out();
                first = false;
            }
        }
        if (width != static_cast<std::size_t>(class_count_))
            throw ShapeError("final width " + std::to_string(width) + " != class count " +
                             std::to_string(class_count_));
        if (feature_layer_index_ + 1 >= layers_->size())
            throw ShapeError("feature layer must precede the output layer");
    }

    std::shared_ptr<std::vector<Layer>> layers_;
    int class_count_ = 0;
    std::size_t feature_layer_index_ = 0;
    std::optional<std::vector<double>> mask_;
};

// Activations recorded by one forward pass over a batch. acts[0] is the input; acts[i + 1]
// is the output of layer i (after masking for the feature layer). feature_raw holds the
// feature-layer output before the mask.
struct ForwardTape {
    std::size_t batch = 0;
    std::vector<std::vector<double>> acts;
    std::vector<double> feature_raw;

    std::span<const double> logits() const { return acts.back(); }
};

struct ForwardResult {
    Tensor logits; // [batch, classes] or [classes] for a single example
    ForwardTape tape;
};

namespace detail {

inline std::size_t batch_of(const Network& net, const Tensor& x)
{
    const std::size_t d = net.input_dim();
    if (x.empty() || x.size() % d != 0)
        throw ShapeError("input of size " + std::to_string(x.size()) + " does not match input width " +
                         std::to_string(d));
    return x.size() / d;
}

inline void affine_forward(const Affine& a, std::span<const double> in, std::span<double> out,
                           std::size_t batch)
{
    const std::size_t ni = a.in(), no = a.out();
    const double* w = a.weight.raw().data();
    const double* b = a.bias.raw().data();
    for (std::size_t n = 0; n < batch; ++n) {
        const double* xi = in.data() + n * ni;
        double* yo = out.data() + n * no;
        for (std::size_t o = 0; o < no; ++o) {
            const double* row = w + o * ni;
            double s = b[o];
            for (std::size_t i = 0; i < ni; ++i) s += row[i] * xi[i];
            yo[o] = s;
        }
    }
}

} // namespace detail

inline ForwardResult forward(const Network& net, const Tensor& x)
{
    const std::size_t batch = detail::batch_of(net, x);
    const auto& layers = net.layers();
    ForwardTape tape;
    tape.batch = batch;
    tape.acts.reserve(layers.size() + 1);
    tape.acts.push_back(x.raw());
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& in = tape.acts.back();
        std::vector<double> out;
        if (const auto* a = std::get_if<Affine>(&layers[li])) {
            out.resize(batch * a->out());
            detail::affine_forward(*a, in, out, batch);
        } else {
            out.resize(in.size());
            for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
        }
        if (li == net.feature_layer_index()) {
            tape.feature_raw = out;
            if (const auto& mask = net.prune_mask()) {
                const std::size_t f = mask->size();
                for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i % f];
            }
        }
        tape.acts.push_back(std::move(out));
    }
    const std::size_t c = static_cast<std::size_t>(net.class_count());
    Shape shape = batch == 1 ? Shape{c} : Shape{batch, c};
    Tensor logits(std::move(shape), tape.acts.back());
    return {std::move(logits), std::move(tape)};
}

inline Tensor logits(const Network& net, const Tensor& x) { return forward(net, x).logits; }

inline int predict(const Network& net, const Tensor& x)
{
    const Tensor z = logits(net, x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

// Softmax cross-entropy with max subtraction.
inline double loss_ce(std::span<const double> logits, int y)
{
    if (y < 0 || static_cast<std::size_t>(y) >= logits.size()) throw Error("label out of range");
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double z : logits) s += std::exp(z - m);
    return std::log(s) + m - logits[static_cast<std::size_t>(y)];
}

inline double loss_ce(const Tensor& logits, int y) { return loss_ce(logits.values(), y); }

// d loss_ce / d logits = softmax - onehot(y)
inline std::vector<double> loss_ce_grad(std::span<const double> logits, int y)
{
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - m));
    for (double& v : p) v /= s;
    p[static_cast<std::size_t>(y)] -= 1.0;
    return p;
}

enum class LossKind { CrossEntropy, Fia };

// Differentiated quantity: cross-entropy on the logits, or sum(delta * feature) for FIA.
struct Loss {
    LossKind kind = LossKind::CrossEntropy;
    Tensor delta; // feature-layer weights for FIA

    static Loss cross_entropy() { return {}; }
    static Loss fia(Tensor delta) { return {LossKind::Fia, std::move(delta)}; }
};

struct ParamGrads {
    std::vector<Tensor> weight; // indexed by layer; empty tensors for ReLU layers
    std::vector<Tensor> bias;
};

// Propagates the gradient w.r.t. the (masked) output of layer `from` down to the input.
// Optionally accumulates parameter gradients.
inline std::vector<double> backprop(const Network& net, const ForwardTape& tape, std::size_t from,
                                    std::vector<double> grad_out, ParamGrads* params = nullptr)
{
    const auto& layers = net.layers();
    const std::size_t batch = tape.batch;
    for (std::size_t li = from + 1; li-- > 0;) {
        if (li == net.feature_layer_index()) {
            if (const auto& mask = net.prune_mask()) {
                const std::size_t f = mask->size();
                for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] *= (*mask)[i % f];
            }
        }
        const auto& in = tape.acts[li];
        std::vector<double> grad_in(in.size(), 0.0);
        if (const auto* a = std::get_if<Affine>(&layers[li])) {
            const std::size_t ni = a->in(), no = a->out();
            const double* w = a->weight.raw().data();
            for (std::size_t n = 0; n < batch; ++n) {
                const double* go = grad_out.data() + n * no;
                double* gi = grad_in.data() + n * ni;
                for (std::size_t o = 0; o < no; ++o) {
                    const double g = go[o];
                    if (g == 0.0) continue;
                    const double* row = w + o * ni;
                    for (std::size_t i = 0; i < ni; ++i) gi[i] += row[i] * g;
                }
            }
            if (params) {
                double* gw = params->weight[li].raw().data();
                double* gb = params->bias[li].raw().data();
                for (std::size_t n = 0; n < batch; ++n) {
                    const double* go = grad_out.data() + n * no;
                    const double* xi = in.data() + n * ni;
                    for (std::size_t o = 0; o < no; ++o) {
                        gb[o] += go[o];
                        double* row = gw + o * ni;
                        for (std::size_t i = 0; i < ni; ++i) row[i] += go[o] * xi[i];
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > 0.0 ? grad_out[i] : 0.0;
        }
        grad_out = std::move(grad_in);
    }
    return grad_out;
}

inline ParamGrads zero_param_grads(const Network& net)
{
    ParamGrads g;
    for (const auto& layer : net.layers()) {
        if (const auto* a = std::get_if<Affine>(&layer)) {
            g.weight.emplace_back(a->weight.shape());
            g.bias.emplace_back(a->bias.shape());
        } else {
            g.weight.emplace_back();
            g.bias.emplace_back();
        }
    }
    return g;
}

inline double fia_loss_from_tape(const Network& net, const ForwardTape& tape, const Tensor& delta)
{
    const auto& f = tape.acts[net.feature_layer_index() + 1];
    if (delta.size() != net.feature_width() || tape.batch != 1)
        throw ShapeError("FIA weights must match the feature width of a single example");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += delta[i] * f[i];
    return s;
}

struct LossAndGrad {
    double loss = 0.0;
    Tensor grad;
};

// Exact reverse-mode loss gradient w.r.t. a single input, honoring any prune mask.
inline LossAndGrad loss_and_grad_input(const Network& net, const Tensor& x, int y, const Loss& loss)
{
    auto fr = forward(net, x);
    if (fr.tape.batch != 1) throw ShapeError("loss gradient expects a single example");
    LossAndGrad out;
    std::vector<double> g;
    if (loss.kind == LossKind::CrossEntropy) {
        out.loss = loss_ce(fr.tape.logits(), y);
        g = backprop(net, fr.tape, net.layers().size() - 1, loss_ce_grad(fr.tape.logits(), y));
    } else {
        out.loss = fia_loss_from_tape(net, fr.tape, loss.delta);
        g = backprop(net, fr.tape, net.feature_layer_index(), loss.delta.raw());
    }
    out.grad = Tensor(x.shape(), std::move(g));
    return out;
}

inline Tensor grad_input(const Network& net, const Tensor& x, int y, const Loss& loss = {})
{
    return loss_and_grad_input(net, x, y, loss).grad;
}

inline double loss_value(const Network& net, const Tensor& x, int y, const Loss& loss = {})
{
    auto fr = forward(net, x);
    if (loss.kind == LossKind::CrossEntropy) return loss_ce(fr.tape.logits(), y);
    return fia_loss_from_tape(net, fr.tape, loss.delta);
}

namespace detail {

// Gradient of `head` (a function of the logits) w.r.t. the pre-mask feature activations.
inline Tensor feature_gradient(const Network& net, const ForwardTape& tape, std::vector<double> grad_logits)
{
    const auto& layers = net.layers();
    const std::size_t feature = net.feature_layer_index();
    std::vector<double> g = std::move(grad_logits);
    for (std::size_t li = layers.size(); li-- > feature + 1;) {
        const auto& in = tape.acts[li];
        std::vector<double> gi(in.size(), 0.0);
        if (const auto* a = std::get_if<Affine>(&layers[li])) {
            const std::size_t ni = a->in(), no = a->out();
            for (std::size_t o = 0; o < no; ++o)
                for (std::size_t i = 0; i < ni; ++i) gi[i] += a->weight[o * ni + i] * g[o];
        } else {
            for (std::size_t i = 0; i < in.size(); ++i) gi[i] = in[i] > 0.0 ? g[i] : 0.0;
        }
        g = std::move(gi);
    }
    if (const auto& mask = net.prune_mask())
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= (*mask)[i];
    const std::size_t n = g.size();
    return Tensor({n}, std::move(g));
}

} // namespace detail

// d loss_ce / d (feature activation), one entry per feature neuron.
inline Tensor grad_feature(const Network& net, const Tensor& x, int y)
{
    auto fr = forward(net, x);
    if (fr.tape.batch != 1) throw ShapeError("grad_feature expects a single example");
    return detail::feature_gradient(net, fr.tape, loss_ce_grad(fr.tape.logits(), y));
}

// d logit[c] / d (feature activation).
inline Tensor grad_feature_logit(const Network& net, const Tensor& x, int c)
{
    auto fr = forward(net, x);
    std::vector<double> onehot(static_cast<std::size_t>(net.class_count()), 0.0);
    onehot.at(static_cast<std::size_t>(c)) = 1.0;
    return detail::feature_gradient(net, fr.tape, std::move(onehot));
}

// Feature-layer activations (after any mask) for one example.
inline Tensor features(const Network& net, const Tensor& x)
{
    auto fr = forward(net, x);
    auto& f = fr.tape.acts[net.feature_layer_index() + 1];
    const std::size_t n = f.size();
    return Tensor({n}, std::move(f));
}

// Checkpoint file: "GLNW", u32 LE version, u32 LE header length, UTF-8 JSON header,
// then little-endian f64 parameters (weight then bias per affine layer, in layer order).
namespace checkpoint {

inline constexpr char kMagic[4] = {'G', 'L', 'N', 'W'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u32(std::ostream& out, std::uint32_t v)
{
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& in)
{
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("checkpoint truncated");
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
}

inline void put_f64s(std::ostream& out, std::span<const double> values)
{
    for (double v : values) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline void get_f64s(std::istream& in, std::span<double> values)
{
    for (double& v : values) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("checkpoint payload truncated");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t{b[i]} << (8 * i);
        v = std::bit_cast<double>(bits);
    }
}

inline void write_header(std::ostream& out, const char (&magic)[4], const nlohmann::json& header)
{
    out.write(magic, 4);
    put_u32(out, kVersion);
    const std::string text = header.dump();
    put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::istream& in, const char (&magic)[4])
{
    char m[4];
    if (!in.read(m, 4) || std::memcmp(m, magic, 4) != 0) throw Error("bad file magic");
    if (get_u32(in) != kVersion) throw Error("unsupported format version");
    const std::uint32_t len = get_u32(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), len)) throw Error("header truncated");
    return nlohmann::json::parse(text);
}

} // namespace checkpoint

inline void save_network(const Network& net, const std::filesystem::path& path)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.layers()) {
        if (const auto* a = std::get_if<Affine>(&layer))
            layers.push_back({{"kind", "affine"}, {"in", a->in()}, {"out", a->out()}});
        else
            layers.push_back({{"kind", "relu"}});
    }
    nlohmann::json header = {{"layers", layers},
                             {"class_count", net.class_count()},
                             {"feature_layer_index", net.feature_layer_index()},
                             {"seed", net.seed},
                             {"training", net.training_meta}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    checkpoint::write_header(out, checkpoint::kMagic, header);
    for (const auto& layer : net.layers())
        if (const auto* a = std::get_if<Affine>(&layer)) {
            checkpoint::put_f64s(out, a->weight.values());
            checkpoint::put_f64s(out, a->bias.values());
        }
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

inline Network load_network(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path.string());
    const auto header = checkpoint::read_header(in, checkpoint::kMagic);
    std::vector<Layer> layers;
    for (const auto& l : header.at("layers")) {
        if (l.at("kind") == "affine") {
            const std::size_t ni = l.at("in"), no = l.at("out");
            Affine a{Tensor({no, ni}), Tensor({no})};
            checkpoint::get_f64s(in, a.weight.values());
            checkpoint::get_f64s(in, a.bias.values());
            layers.emplace_back(std::move(a));
        } else if (l.at("kind") == "relu") {
            layers.emplace_back(Relu{});
        } else {
            throw Error("unknown layer kind in checkpoint");
        }
    }
    Network net(std::move(layers), header.at("class_count").get<int>(),
                header.at("feature_layer_index").get<std::size_t>());
    net.seed = header.value("seed", std::uint64_t{0});
    net.training_meta = header.value("training", nlohmann::json::object());
    return net;
}

} // namespace gradlab

#endif // GRADLAB_DIFFNET_HPP

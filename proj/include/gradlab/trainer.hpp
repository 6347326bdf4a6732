#ifndef GRADLAB_TRAINER_HPP
#define GRADLAB_TRAINER_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gradlab/dataio.hpp"
#include "gradlab/diffnet.hpp"
#include "gradlab/parallel.hpp"

namespace gradlab {

struct TrainConfig {
    std::vector<std::size_t> hidden{64, 32};
    int epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(learning_rate >= 0.0)) throw Error("learning rate must be non-negative");
        if (epochs < 1) throw Error("epochs must be at least 1");
        if (batch_size < 1) throw Error("batch size must be at least 1");
        if (hidden.empty()) throw Error("at least one hidden layer is required");
    }
};

class TrainingDiverged : public Error {
public:
    explicit TrainingDiverged(int epoch)
        : Error("training diverged (non-finite loss) in epoch " + std::to_string(epoch)), epoch_(epoch)
    {
    }
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

inline std::vector<std::size_t> architecture(const TrainConfig& cfg, const Dataset& data)
{
    std::vector<std::size_t> widths{data.pixels()};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(static_cast<std::size_t>(data.class_count));
    return widths;
}

inline Network init_network(const TrainConfig& cfg, const Dataset& data)
{
    Rng rng(derive_seed(cfg.seed, "init"));
    Network net = Network::mlp(architecture(cfg, data), rng);
    net.seed = cfg.seed;
    return net;
}

// Mini-batch SGD with momentum on mean cross-entropy. The shuffle schedule is drawn from the seed.
inline Network train(const TrainConfig& cfg, const Dataset& data)
{
    cfg.validate();
    if (data.size() == 0) throw Error("cannot train on an empty dataset");
    Network net = init_network(cfg, data);
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    ParamGrads velocity = zero_param_grads(net);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t d = data.pixels();
    const std::size_t c = static_cast<std::size_t>(data.class_count);
    double last_loss = 0.0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const std::size_t bs = end - start;
            std::vector<double> xb(bs * d);
            for (std::size_t b = 0; b < bs; ++b) {
                const auto src = data.images.raw().begin() + static_cast<std::ptrdiff_t>(order[start + b] * d);
                std::copy(src, src + static_cast<std::ptrdiff_t>(d), xb.begin() + static_cast<std::ptrdiff_t>(b * d));
            }
            auto fr = forward(net, Tensor({bs, d}, std::move(xb)));
            std::vector<double> grad_logits(bs * c);
            const auto logits = fr.tape.logits();
            for (std::size_t b = 0; b < bs; ++b) {
                const auto row = logits.subspan(b * c, c);
                const int y = data.labels[order[start + b]];
                epoch_loss += loss_ce(row, y);
                auto g = loss_ce_grad(row, y);
                for (std::size_t k = 0; k < c; ++k) grad_logits[b * c + k] = g[k] / static_cast<double>(bs);
            }
            ParamGrads grads = zero_param_grads(net);
            backprop(net, fr.tape, net.layers().size() - 1, std::move(grad_logits), &grads);

            auto& layers = net.mutable_layers();
            for (std::size_t li = 0; li < layers.size(); ++li) {
                auto* a = std::get_if<Affine>(&layers[li]);
                if (!a) continue;
                auto step = [&](Tensor& param, Tensor& vel, const Tensor& grad) {
                    for (std::size_t i = 0; i < param.size(); ++i) {
                        vel[i] = cfg.momentum * vel[i] + grad[i];
                        param[i] -= cfg.learning_rate * vel[i];
                    }
                };
                step(a->weight, velocity.weight[li], grads.weight[li]);
                step(a->bias, velocity.bias[li], grads.bias[li]);
            }
        }
        last_loss = epoch_loss / static_cast<double>(data.size());
        if (!std::isfinite(last_loss)) throw TrainingDiverged(epoch);
    }
    net.training_meta = {{"epochs", cfg.epochs},
                         {"batch_size", cfg.batch_size},
                         {"learning_rate", cfg.learning_rate},
                         {"momentum", cfg.momentum},
                         {"final_loss", last_loss}};
    return net;
}

inline double accuracy(const Network& net, const Dataset& data)
{
    if (data.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (predict(net, data.image(i)) == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct PoolMember {
    Network net;
    std::uint64_t seed = 0;
    std::vector<std::size_t> hidden;
    double accuracy = 0.0; // held-out
    std::string name;
};

class PoolAccuracyError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPoolAccuracyFloor = 0.90;

// One member per (seed, width variant) pair, seed-major order.
inline std::vector<PoolMember> train_pool(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                          const std::vector<std::vector<std::size_t>>& width_variants,
                                          const Dataset& train_data, const Dataset& test_data,
                                          double accuracy_floor = kPoolAccuracyFloor, unsigned threads = 0)
{
    std::vector<PoolMember> pool;
    for (auto seed : seeds)
        for (const auto& widths : width_variants) {
            PoolMember m;
            m.seed = seed;
            m.hidden = widths;
            std::ostringstream name;
            name << "s" << seed << "_h";
            for (std::size_t i = 0; i < widths.size(); ++i) name << (i ? "x" : "") << widths[i];
            m.name = name.str();
            pool.push_back(std::move(m));
        }
    if (pool.size() < 2) throw Error("a pool needs at least two members");
    parallel_for(
        pool.size(),
        [&](std::size_t i) {
            TrainConfig cfg = base;
            cfg.seed = pool[i].seed;
            cfg.hidden = pool[i].hidden;
            pool[i].net = train(cfg, train_data);
            pool[i].accuracy = accuracy(pool[i].net, test_data);
        },
        threads);
    std::string failures;
    for (const auto& m : pool)
        if (m.accuracy < accuracy_floor)
            failures += " " + m.name + "=" + std::to_string(m.accuracy);
    if (!failures.empty()) throw PoolAccuracyError("pool members below accuracy floor:" + failures);
    return pool;
}

inline void write_pool_accuracy_csv(const std::vector<PoolMember>& pool, std::ostream& out)
{
    out << "member,seed,hidden,accuracy\n";
    for (const auto& m : pool) {
        out << m.name << ',' << m.seed << ',';
        for (std::size_t i = 0; i < m.hidden.size(); ++i) out << (i ? "x" : "") << m.hidden[i];
        out << ',' << m.accuracy << '\n';
    }
}

// Manifest lines: "<checkpoint path> <accuracy>".
inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<std::pair<std::filesystem::path, double>>& entries)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    out.precision(17);
    for (const auto& [p, acc] : entries) out << p.string() << ' ' << acc << '\n';
}

inline std::vector<std::pair<std::filesystem::path, double>> read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error("cannot read manifest " + path.string());
    std::vector<std::pair<std::filesystem::path, double>> entries;
    std::string p;
    double acc = 0.0;
    while (in >> p >> acc) entries.emplace_back(p, acc);
    return entries;
}

// Fraction of examples on which two networks predict different classes.
inline double disagreement(const Network& a, const Network& b, const Dataset& data)
{
    if (data.size() == 0) return 0.0;
    std::size_t diff = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto x = data.image(i);
        if (predict(a, x) != predict(b, x)) ++diff;
    }
    return static_cast<double>(diff) / static_cast<double>(data.size());
}

} // namespace gradlab

#endif // GRADLAB_TRAINER_HPP

#ifndef GRADLAB_SURGERY_HPP
#define GRADLAB_SURGERY_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gradlab/diffnet.hpp"

namespace gradlab {

// Counts network evaluations spent by the importance estimators.
struct CallCounter {
    long forward = 0;
    long backward = 0;
};

using ImportanceVector = std::vector<double>;

// |L(x; theta without neuron j) - L(x; theta)| for every feature neuron, one ablated forward each.
inline ImportanceVector importance_exact(const Network& net, const Tensor& x, int y, CallCounter* calls = nullptr)
{
    const std::size_t width = net.feature_width();
    const std::vector<double> base_mask = net.prune_mask().value_or(std::vector<double>(width, 1.0));
    const double base = loss_value(net, x, y);
    ImportanceVector out(width, 0.0);
    for (std::size_t j = 0; j < width; ++j) {
        auto mask = base_mask;
        mask[j] = 0.0;
        out[j] = std::abs(loss_value(net.with_mask(std::move(mask)), x, y) - base);
    }
    if (calls) calls->forward += static_cast<long>(width) + 1;
    return out;
}

// |dL / d f_j| from a single forward-backward pass.
inline ImportanceVector importance_estimated(const Network& net, const Tensor& x, int y, CallCounter* calls = nullptr)
{
    const Tensor g = grad_feature(net, x, y);
    ImportanceVector out(g.size());
    std::transform(g.begin(), g.end(), out.begin(), [](double v) { return std::abs(v); });
    if (calls) {
        ++calls->forward;
        ++calls->backward;
    }
    return out;
}

// Number of neurons removed at rate gamma; the small slack absorbs products like 0.29 * 100.
inline std::size_t pruned_count(double gamma, std::size_t n)
{
    return static_cast<std::size_t>(std::floor(gamma * static_cast<double>(n) + 1e-9));
}

// Zeroes the floor(gamma * n) least important neurons; ties prune the lower index first.
inline std::vector<double> prune_mask(const ImportanceVector& importance, double gamma)
{
    if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("pruning rate must be in [0, 1)");
    const std::size_t n = importance.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return importance[a] < importance[b]; });
    std::vector<double> mask(n, 1.0);
    const std::size_t k = pruned_count(gamma, n);
    for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 0.0;
    return mask;
}

// Masked view pruned at the given point; gamma = 0 returns the network unchanged.
inline Network prune_at(const Network& base, const Tensor& x, int y, double gamma, CallCounter* calls = nullptr)
{
    if (gamma == 0.0) return base;
    return base.with_mask(prune_mask(importance_estimated(base.without_mask(), x, y, calls), gamma));
}

inline double fia_loss(const Network& net, const Tensor& x, const Tensor& delta)
{
    if (delta.size() != net.feature_width()) throw ShapeError("FIA weights must match the feature width");
    return loss_value(net, x, 0, Loss::fia(delta));
}

struct FiaConfig {
    double drop_probability = 0.1;
    int ensemble_size = 30;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(drop_probability >= 0.0 && drop_probability < 1.0)) throw Error("drop probability must be in [0, 1)");
        if (ensemble_size < 1) throw Error("ensemble size must be at least 1");
    }
};

// Mean over E random pixel-dropout copies of d logit_y / d feature, L2-normalized.
inline Tensor fia_aggregate_delta(const Network& net, const Tensor& x, int y, const FiaConfig& cfg)
{
    cfg.validate();
    Rng rng(cfg.seed);
    Tensor acc({net.feature_width()});
    for (int e = 0; e < cfg.ensemble_size; ++e) {
        Tensor dropped = x;
        for (double& p : dropped)
            if (rng.uniform() < cfg.drop_probability) p = 0.0;
        const Tensor g = grad_feature_logit(net, dropped, y);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    }
    for (double& v : acc) v /= static_cast<double>(cfg.ensemble_size);
    return l2_normalize(acc);
}

} // namespace gradlab

#endif // GRADLAB_SURGERY_HPP

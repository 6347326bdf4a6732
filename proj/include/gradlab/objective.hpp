#ifndef GRADLAB_OBJECTIVE_HPP
#define GRADLAB_OBJECTIVE_HPP

#include <cmath>
#include <vector>

#include "gradlab/diffnet.hpp"
#include "gradlab/surgery.hpp"
#include "gradlab/transforms.hpp"

namespace gradlab {

inline ImageGeometry square_geometry(std::size_t pixels)
{
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(pixels))));
    return {side, side};
}

// Attack objective over a surrogate network: the cross-entropy is maximized and the FIA loss
// minimized, so gradient() returns the matching ascent direction. Optional input transforms
// wrap each gradient evaluation; a nonzero prune rate re-masks the feature layer at the start
// of every outer iteration.
class NetworkObjective {
public:
    NetworkObjective(Network net, int label, Loss loss = {}, TransformConfig transform = {},
                     double prune_rate = 0.0, std::uint64_t transform_seed = 0)
        : base_(net.without_mask()),
          view_(std::move(net)),
          label_(label),
          loss_(std::move(loss)),
          transform_(transform),
          geometry_(square_geometry(base_.input_dim())),
          transform_rng_(transform_seed),
          prune_rate_(prune_rate)
    {
        transform_.validate();
        if (!(prune_rate >= 0.0 && prune_rate < 1.0)) throw Error("pruning rate must be in [0, 1)");
        if (loss_.kind == LossKind::Fia && loss_.delta.size() != base_.feature_width())
            throw ShapeError("FIA weights must match the feature width");
    }

    void set_geometry(ImageGeometry geo) { geometry_ = geo; }

    Tensor gradient(const Tensor& x)
    {
        auto plain = [this](const Tensor& p) { return grad_input(view_, p, label_, loss_); };
        Tensor g;
        switch (transform_.kind) {
        case TransformKind::None: g = plain(x); break;
        case TransformKind::Dim: g = dim_gradient(plain, x, geometry_, transform_, transform_rng_); break;
        case TransformKind::Sim: g = sim_gradient(plain, x, transform_); break;
        case TransformKind::Tim: g = tim_gradient(plain, x, geometry_, transform_); break;
        }
        if (loss_.kind == LossKind::Fia)
            for (double& v : g) v = -v;
        return g;
    }

    double loss(const Tensor& x) const { return loss_value(view_, x, label_, loss_); }

    long gradient_cost() const { return transform_cost(transform_); }

    void begin_iteration(const Tensor& x_t)
    {
        if (prune_rate_ == 0.0) return;
        view_ = prune_at(base_, x_t, label_, prune_rate_, &prune_calls_);
    }

    std::vector<double> current_mask() const { return view_.prune_mask().value_or(std::vector<double>{}); }

    const CallCounter& prune_calls() const { return prune_calls_; }
    const Network& view() const { return view_; }

private:
    Network base_;
    Network view_;
    int label_;
    Loss loss_;
    TransformConfig transform_;
    ImageGeometry geometry_;
    Rng transform_rng_;
    double prune_rate_;
    CallCounter prune_calls_;
};

} // namespace gradlab

#endif // GRADLAB_OBJECTIVE_HPP

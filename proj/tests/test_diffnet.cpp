#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "gradlab/diffnet.hpp"
#include "test_support.hpp"

using namespace gradlab;
using namespace gradlab::testing;

TEST(Forward, ZeroParametersGiveZeroLogits)
{
    Network net = random_mlp({5, 4, 3}, 1);
    for (auto& layer : net.mutable_layers())
        if (auto* a = std::get_if<Affine>(&layer)) {
            for (double& w : a->weight) w = 0.0;
            for (double& b : a->bias) b = 0.0;
        }
    EXPECT_EQ(logits(net, random_input(5, 2)), Tensor({3}));
}

TEST(Forward, HandComputedFixture)
{
    const Network net = load_fixture_net();
    // hidden pre-activations [-0.5, 0.8] -> relu [0, 0.8]
    const Tensor z = logits(net, Tensor::vector({0.4, 0.8}));
    EXPECT_NEAR(z[0], -0.35, 1e-14);
    EXPECT_NEAR(z[1], 1.6, 1e-14);
    // hidden [0.45, 1.625], both active
    const Tensor z2 = logits(net, Tensor::vector({0.9, 0.1}));
    EXPECT_NEAR(z2[0], -0.0875, 1e-14);
    EXPECT_NEAR(z2[1], 2.8, 1e-14);
}

TEST(Forward, ShapeMismatchThrows)
{
    const Network net = random_mlp({4, 3, 2}, 1);
    EXPECT_THROW(forward(net, Tensor({5})), ShapeError);
}

TEST(Forward, AllOnesMaskIsIdentity)
{
    const Network net = random_mlp({6, 8, 5, 3}, 3);
    const Network masked = net.with_mask(std::vector<double>(5, 1.0));
    for (int i = 0; i < 10; ++i) {
        const Tensor x = random_input(6, 100 + i);
        EXPECT_EQ(logits(net, x), logits(masked, x));
    }
}

TEST(Forward, MaskEquivalentToWeightSurgery)
{
    const Network net = random_mlp({6, 8, 5, 3}, 4);
    const std::vector<double> mask{1, 0, 1, 0, 0};
    const Network masked = net.with_mask(mask);
    Network surgery = net;
    auto& head = std::get<Affine>(surgery.mutable_layers()[net.feature_layer_index() + 1]);
    for (std::size_t o = 0; o < head.out(); ++o)
        for (std::size_t i = 0; i < head.in(); ++i)
            if (mask[i] == 0.0) head.weight[o * head.in() + i] = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Tensor x = random_input(6, 200 + i);
        EXPECT_EQ(logits(masked, x), logits(surgery, x));
    }
}

TEST(Forward, TapeReplayReproducesLogits)
{
    const Network net = random_mlp({7, 6, 4}, 5);
    const Tensor x = random_input(7, 6);
    const auto fr = forward(net, x);
    const auto z = fr.tape.logits();
    EXPECT_EQ(Tensor({4}, std::vector<double>(z.begin(), z.end())), fr.logits);
    EXPECT_EQ(forward(net, x).logits, fr.logits);
}

TEST(Forward, InvalidMaskRejected)
{
    const Network net = random_mlp({3, 4, 2}, 1);
    EXPECT_THROW(net.with_mask({1, 0, 1}), ShapeError);
    EXPECT_THROW(net.with_mask({1, 0.5, 1, 1}), Error);
}

TEST(LossCe, UniformLogits)
{
    EXPECT_NEAR(loss_ce(Tensor({4}), 2), std::log(4.0), 1e-15);
    EXPECT_NEAR(loss_ce(Tensor::vector({0, 0, 0, 0}), 0), 1.386294, 1e-6);
}

TEST(LossCe, LargeMarginGoesToZero)
{
    EXPECT_LT(loss_ce(Tensor::vector({60, 0, 0}), 0), 1e-25);
    EXPECT_EQ(loss_ce(Tensor::vector({1e4, 0, 0}), 0), 0.0);
    EXPECT_TRUE(std::isfinite(loss_ce(Tensor::vector({1e4, 0, 0}), 1)));
}

TEST(LossCe, MatchesExtendedPrecision)
{
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 2 + rng.below(9);
        Tensor z({c});
        for (double& v : z) v = 8.0 * rng.normal();
        const int y = static_cast<int>(rng.below(c));
        long double m = z[0];
        for (double v : z) m = std::max<long double>(m, v);
        long double s = 0.0L;
        for (double v : z) s += std::exp(static_cast<long double>(v) - m);
        const long double ref = std::log(s) + m - static_cast<long double>(z[static_cast<std::size_t>(y)]);
        EXPECT_NEAR(loss_ce(z, y), static_cast<double>(ref), 1e-13 * std::max(1.0, static_cast<double>(ref)));
    }
}

TEST(GradInput, FiniteDifferenceSmallNet)
{
    const GradCheck r = gradient_check({2, 8, 4}, 100, 21);
    EXPECT_LE(r.input_ce, 1e-4);
    EXPECT_LE(r.input_fia, 1e-4);
    EXPECT_LE(r.feature, 1e-4);
}

TEST(GradInput, FiniteDifferenceMnistShape)
{
    const GradCheck r = gradient_check({784, 64, 32, 10}, 5, 22);
    EXPECT_LE(r.worst(), 1e-4);
}

TEST(GradInput, SoftmaxRegressionClosedForm)
{
    // identity -> relu -> W: on positive inputs this is softmax regression
    const std::size_t d = 5, c = 3;
    Affine id{Tensor({d, d}), Tensor({d})};
    for (std::size_t i = 0; i < d; ++i) id.weight[i * d + i] = 1.0;
    Rng rng(3);
    Affine w{Tensor({c, d}), Tensor({c})};
    for (double& v : w.weight) v = rng.normal();
    for (double& v : w.bias) v = rng.normal();
    const Affine w_copy = w;
    const Network net({id, Relu{}, w}, static_cast<int>(c), 1);

    const Tensor x = random_input(d, 4);
    const int y = 1;
    std::vector<double> z(c);
    for (std::size_t o = 0; o < c; ++o) {
        z[o] = w_copy.bias[o];
        for (std::size_t i = 0; i < d; ++i) z[o] += w_copy.weight[o * d + i] * x[i];
    }
    double s = 0.0;
    for (double v : z) s += std::exp(v);
    Tensor expected({d});
    for (std::size_t o = 0; o < c; ++o) {
        const double r = std::exp(z[o]) / s - (static_cast<int>(o) == y ? 1.0 : 0.0);
        for (std::size_t i = 0; i < d; ++i) expected[i] += w_copy.weight[o * d + i] * r;
    }
    EXPECT_LE(max_relative_error(grad_input(net, x, y), expected, 1e-12), 1e-12);
}

TEST(GradInput, Deterministic)
{
    const Network net = random_mlp({9, 7, 4}, 8);
    const Tensor x = random_input(9, 9);
    EXPECT_EQ(grad_input(net, x, 2), grad_input(net, x, 2));
}

TEST(GradInput, HonoursMask)
{
    const Network net = random_mlp({2, 8, 4}, 10);
    const Network masked = net.with_mask({1, 1, 0, 1, 0, 1, 1, 1});
    int checked = 0;
    for (int i = 0; checked < 20; ++i) {
        const Tensor x = random_input(2, 300 + i);
        if (!away_from_kinks(masked, x, 1e-3)) continue;
        const Tensor fd = central_difference([&](const Tensor& p) { return loss_value(masked, p, 1); }, x, 1e-5);
        EXPECT_LE(max_relative_error(grad_input(masked, x, 1), fd), 1e-4);
        ++checked;
    }
}

TEST(GradFeature, ZeroOutgoingWeightsGiveZero)
{
    Network net = random_mlp({4, 6, 3}, 11);
    auto& head = std::get<Affine>(net.mutable_layers()[net.feature_layer_index() + 1]);
    for (std::size_t o = 0; o < head.out(); ++o) head.weight[o * head.in() + 2] = 0.0;
    const Tensor g = grad_feature(net, random_input(4, 12), 0);
    EXPECT_EQ(g[2], 0.0);
}

TEST(GradFeature, MaskedNeuronGivesZero)
{
    const Network net = random_mlp({4, 6, 3}, 13).with_mask({1, 1, 1, 0, 1, 1});
    const Tensor g = grad_feature(net, random_input(4, 14), 2);
    EXPECT_EQ(g[3], 0.0);
}

TEST(GradFeature, FiniteDifferenceOnActivations)
{
    const Network net = random_mlp({5, 7, 6, 3}, 15);
    for (int i = 0; i < 20; ++i) {
        const Tensor x = random_input(5, 400 + i);
        const Tensor f = raw_features(net, x);
        const Tensor fd = central_difference([&](const Tensor& p) { return head_loss(net, p, 0); }, f, 1e-5);
        EXPECT_LE(max_relative_error(grad_feature(net, x, 0), fd), 1e-4);
    }
}

TEST(Checkpoint, RoundTripIsBitIdentical)
{
    Network net = random_mlp({6, 5, 4, 3}, 16);
    net.seed = 99;
    net.training_meta = {{"epochs", 3}};
    const auto path = std::filesystem::temp_directory_path() / "gradlab_ckpt_roundtrip.glnw";
    save_network(net, path);
    const Network back = load_network(path);
    EXPECT_EQ(back.seed, 99u);
    EXPECT_EQ(back.training_meta["epochs"], 3);
    EXPECT_EQ(back.feature_layer_index(), net.feature_layer_index());
    for (int i = 0; i < 5; ++i) {
        const Tensor x = random_input(6, 500 + i);
        EXPECT_EQ(logits(back, x), logits(net, x));
    }
}

TEST(Checkpoint, RejectsBadMagic)
{
    const auto path = std::filesystem::temp_directory_path() / "gradlab_ckpt_bad.glnw";
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE0000";
    }
    EXPECT_THROW(load_network(path), Error);
    EXPECT_THROW(load_network(path.string() + ".missing"), Error);
}

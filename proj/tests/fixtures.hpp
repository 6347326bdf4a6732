#ifndef GRADLAB_TEST_FIXTURES_HPP
#define GRADLAB_TEST_FIXTURES_HPP

#include <fstream>
#include <string>

#include "json.hpp"

#include "gradlab/diffnet.hpp"

#ifndef GRADLAB_FIXTURE_DIR
#error "GRADLAB_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace gradlab::testing {

inline std::string fixture_path(const std::string& name) { return std::string(GRADLAB_FIXTURE_DIR) + "/" + name; }

inline Affine affine_from_json(const nlohmann::json& w, const nlohmann::json& b)
{
    const std::size_t out = w.size(), in = w.at(0).size();
    Affine a{Tensor({out, in}), Tensor({out})};
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) a.weight[o * in + i] = w[o][i].get<double>();
        a.bias[o] = b[o].get<double>();
    }
    return a;
}

// affine -> relu (feature layer) -> affine
inline Network load_fixture_net(const std::string& name = "net_2_2_2.json")
{
    std::ifstream in(fixture_path(name));
    const auto j = nlohmann::json::parse(in);
    std::vector<Layer> layers;
    layers.emplace_back(affine_from_json(j.at("hidden_weight"), j.at("hidden_bias")));
    layers.emplace_back(Relu{});
    layers.emplace_back(affine_from_json(j.at("output_weight"), j.at("output_bias")));
    return Network(std::move(layers), static_cast<int>(j.at("output_bias").size()), 1);
}

} // namespace gradlab::testing

#endif // GRADLAB_TEST_FIXTURES_HPP

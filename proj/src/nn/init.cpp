#include "eddynet/init.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace eddynet::nn {

double rule_variance(VarianceRule rule, std::size_t fan_in) {
    if (fan_in == 0) throw std::invalid_argument("rule_variance: fan_in must be positive");
    const double num = rule == VarianceRule::he ? 2.0 : 1.0;
    return num / static_cast<double>(fan_in);
}

std::size_t fan_in(const LayerParams<float>& params) {
    switch (params.kind) {
        case LayerKind::conv3x3:
        case LayerKind::conv1x1:
        case LayerKind::transposed_conv:
            return params.in_channels() * params.weights.h() * params.weights.w();
        case LayerKind::batchnorm: break;
    }
    throw std::invalid_argument("fan_in: batchnorm layers have no fan-in");
}

Tensor init_truncated_gaussian(Shape4 shape, VarianceRule rule, std::size_t fan_in, Rng& rng) {
    const double sigma = std::sqrt(rule_variance(rule, fan_in));
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor out(shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) z = normal(rng);
        out[i] = static_cast<float>(z * sigma);
    }
    return out;
}

}  // namespace eddynet::nn

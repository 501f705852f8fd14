#ifndef EDDYNET_INIT_HPP
#define EDDYNET_INIT_HPP

#include <cstddef>

#include "eddynet/layers.hpp"
#include "eddynet/tensor.hpp"

namespace eddynet::nn {

/// he: variance 2/fan_in (ReLU networks). lecun: variance 1/fan_in (SELU networks).
enum class VarianceRule { he, lecun };

double rule_variance(VarianceRule rule, std::size_t fan_in);

/// in_channels * kernel_h * kernel_w of a convolution-like layer. For a transposed
/// convolution, in_channels is the layer's input channel count.
std::size_t fan_in(const LayerParams<float>& params);

/// Zero-mean Gaussian with the rule's variance, resampled until the draw lies in [-2 sigma, 2 sigma].
Tensor init_truncated_gaussian(Shape4 shape, VarianceRule rule, std::size_t fan_in, Rng& rng);

}  // namespace eddynet::nn

#endif  // EDDYNET_INIT_HPP

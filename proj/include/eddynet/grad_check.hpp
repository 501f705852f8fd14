#ifndef EDDYNET_GRAD_CHECK_HPP
#define EDDYNET_GRAD_CHECK_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "eddynet/layers.hpp"

namespace eddynet::nn {

struct GradCheckOptions {
    double step = 1e-3;       // central-difference half width
    double tolerance = 1e-4;  // max relative error
    double guard = 1e-8;      // relative-error denominator floor
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    bool pass = false;
    std::size_t checked = 0;
    std::string worst;  // "<target>[<index>]: analytic=... numeric=..."
};

/// A set of variables perturbed by the finite-difference oracle, and the analytic
/// gradient of the loss with respect to them.
struct GradTarget {
    std::string name;
    std::span<double> values;
    std::span<const double> analytic;
};

/// Central finite differences of `loss` around the current values of every target,
/// compared element-wise against the analytic gradients. Values are restored afterwards.
GradCheckReport compare_with_finite_differences(const std::function<double()>& loss,
                                                const std::vector<GradTarget>& targets,
                                                const GradCheckOptions& options = {});

enum class CheckedOp {
    conv3x3,
    conv1x1,
    transposed_conv,
    maxpool,
    batchnorm_train,
    batchnorm_infer,
    relu,
    selu,
    softmax,
    dropout,
    alpha_dropout,
};

std::string to_string(CheckedOp op);

/// Checks one layer kernel in 64-bit arithmetic. The scalar loss is a random projection
/// <R, layer(input)> with R drawn from `seed`; stochastic layers replay the same mask for
/// every evaluation. `params` is ignored by parameter-free layers.
GradCheckReport grad_check(CheckedOp op, const Tensor4<double>& input, const LayerParams<double>& params,
                           std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace eddynet::nn

#endif  // EDDYNET_GRAD_CHECK_HPP

#include "eddynet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace eddynet::nn {

GradCheckReport compare_with_finite_differences(const std::function<double()>& loss,
                                                const std::vector<GradTarget>& targets,
                                                const GradCheckOptions& options) {
    GradCheckReport report;
    for (const auto& t : targets) {
        if (t.values.size() != t.analytic.size()) {
            throw std::invalid_argument("grad check target " + t.name + ": " + std::to_string(t.values.size()) +
                                        " values but " + std::to_string(t.analytic.size()) + " gradients");
        }
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const double saved = t.values[i];
            t.values[i] = saved + options.step;
            const double up = loss();
            t.values[i] = saved - options.step;
            const double down = loss();
            t.values[i] = saved;
            const double numeric = (up - down) / (2.0 * options.step);
            const double analytic = t.analytic[i];
            const double denom = std::max({std::abs(analytic), std::abs(numeric), options.guard});
            const double rel = std::abs(analytic - numeric) / denom;
            ++report.checked;
            if (!(rel <= report.max_relative_error)) {
                report.max_relative_error = std::isnan(rel) ? INFINITY : rel;
                std::ostringstream os;
                os << t.name << "[" << i << "]: analytic=" << analytic << " numeric=" << numeric;
                report.worst = os.str();
            }
        }
    }
    report.pass = report.max_relative_error < options.tolerance;
    return report;
}

std::string to_string(CheckedOp op) {
    switch (op) {
        case CheckedOp::conv3x3: return "conv3x3";
        case CheckedOp::conv1x1: return "conv1x1";
        case CheckedOp::transposed_conv: return "transposed_conv";
        case CheckedOp::maxpool: return "maxpool2x2";
        case CheckedOp::batchnorm_train: return "batchnorm_train";
        case CheckedOp::batchnorm_infer: return "batchnorm_infer";
        case CheckedOp::relu: return "relu";
        case CheckedOp::selu: return "selu";
        case CheckedOp::softmax: return "softmax_channels";
        case CheckedOp::dropout: return "dropout";
        case CheckedOp::alpha_dropout: return "alpha_dropout";
    }
    return "unknown";
}

namespace {

constexpr double kDropoutRate = 0.3;

using TensorD = Tensor4<double>;

TensorD forward(CheckedOp op, const TensorD& x, const LayerParams<double>& p, std::uint64_t mask_seed) {
    switch (op) {
        case CheckedOp::conv3x3:
        case CheckedOp::conv1x1: return conv2d_forward(x, p);
        case CheckedOp::transposed_conv: return transposed_conv2d_forward(x, p);
        case CheckedOp::maxpool: return maxpool2x2_forward(x).output;
        case CheckedOp::batchnorm_train: return batchnorm_forward(x, p, Mode::train).output;
        case CheckedOp::batchnorm_infer: return batchnorm_forward(x, p, Mode::infer).output;
        case CheckedOp::relu: return relu_forward(x);
        case CheckedOp::selu: return selu_forward(x);
        case CheckedOp::softmax: return softmax_channels(x);
        case CheckedOp::dropout: {
            Rng rng(mask_seed);
            return dropout_forward(x, kDropoutRate, rng, Mode::train).output;
        }
        case CheckedOp::alpha_dropout: {
            Rng rng(mask_seed);
            return alpha_dropout_forward(x, kDropoutRate, rng, Mode::train).output;
        }
    }
    throw std::invalid_argument("grad_check: unknown op");
}

LayerBackward<double> backward(CheckedOp op, const TensorD& x, const LayerParams<double>& p,
                               const TensorD& g, std::uint64_t mask_seed) {
    LayerBackward<double> b;
    switch (op) {
        case CheckedOp::conv3x3:
        case CheckedOp::conv1x1: return conv2d_backward(x, p, g);
        case CheckedOp::transposed_conv: return transposed_conv2d_backward(x, p, g);
        case CheckedOp::maxpool: b.grad_input = maxpool2x2_backward(maxpool2x2_forward(x), g); return b;
        case CheckedOp::batchnorm_train:
            return batchnorm_backward(batchnorm_forward(x, p, Mode::train).cache, p, g);
        case CheckedOp::batchnorm_infer:
            return batchnorm_backward(batchnorm_forward(x, p, Mode::infer).cache, p, g);
        case CheckedOp::relu: b.grad_input = relu_backward(x, g); return b;
        case CheckedOp::selu: b.grad_input = selu_backward(x, g); return b;
        case CheckedOp::softmax: b.grad_input = softmax_channels_backward(softmax_channels(x), g); return b;
        case CheckedOp::dropout: {
            Rng rng(mask_seed);
            b.grad_input = dropout_backward(dropout_forward(x, kDropoutRate, rng, Mode::train), g);
            return b;
        }
        case CheckedOp::alpha_dropout: {
            Rng rng(mask_seed);
            b.grad_input = dropout_backward(alpha_dropout_forward(x, kDropoutRate, rng, Mode::train), g);
            return b;
        }
    }
    throw std::invalid_argument("grad_check: unknown op");
}

bool has_params(CheckedOp op) {
    switch (op) {
        case CheckedOp::conv3x3:
        case CheckedOp::conv1x1:
        case CheckedOp::transposed_conv:
        case CheckedOp::batchnorm_train:
        case CheckedOp::batchnorm_infer: return true;
        default: return false;
    }
}

}  // namespace

GradCheckReport grad_check(CheckedOp op, const Tensor4<double>& input, const LayerParams<double>& params,
                           std::uint64_t seed, const GradCheckOptions& options) {
    TensorD x = input;
    LayerParams<double> p = params;
    const std::uint64_t mask_seed = seed ^ 0x9e3779b97f4a7c15ULL;

    const TensorD y0 = forward(op, x, p, mask_seed);
    TensorD proj(y0.shape());
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = normal(rng);

    const LayerBackward<double> analytic = backward(op, x, p, proj, mask_seed);

    auto loss = [&]() {
        const TensorD y = forward(op, x, p, mask_seed);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
        return s;
    };

    std::vector<GradTarget> targets;
    targets.push_back({"input", x.span(), analytic.grad_input.span()});
    if (has_params(op)) {
        const auto& g = analytic.grads;
        if (!p.weights.empty()) targets.push_back({"weights", p.weights.span(), g.weights.span()});
        if (!p.bias.empty()) targets.push_back({"bias", p.bias, g.bias});
        if (!p.gamma.empty()) targets.push_back({"gamma", p.gamma, g.gamma});
        if (!p.beta.empty()) targets.push_back({"beta", p.beta, g.beta});
    }
    return compare_with_finite_differences(loss, targets, options);
}

}  // namespace eddynet::nn

#ifndef EDDYNET_LAYERS_HPP
#define EDDYNET_LAYERS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eddynet/tensor.hpp"

namespace eddynet::nn {

using Rng = std::mt19937_64;

enum class Mode { train, infer };

enum class LayerKind : std::uint32_t {
    conv3x3 = 0,
    conv1x1 = 1,
    transposed_conv = 2,  // stride 2, kernel 2x2 or 3x3
    batchnorm = 3,
};

std::string to_string(LayerKind kind);

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

// Published SELU constants.
inline constexpr double kSeluLambda = 1.0507009873554804934;
inline constexpr double kSeluAlpha = 1.6732632423543772848;

/// Parameters of one layer.
///
/// Weight layouts:
///   conv3x3 / conv1x1   (out, in, k, k)
///   transposed_conv     (in, out, k, k)
///   batchnorm           weights unused; per-channel gamma, beta, moving_mean, moving_var
template <typename T>
struct LayerParams {
    LayerKind kind = LayerKind::conv3x3;
    Tensor4<T> weights;
    std::vector<T> bias;
    std::vector<T> gamma;
    std::vector<T> beta;
    std::vector<T> moving_mean;
    std::vector<T> moving_var;
    bool trainable = true;

    std::size_t in_channels() const;
    std::size_t out_channels() const;
    std::size_t kernel() const { return weights.h(); }

    /// Number of elements updated by the optimizer.
    std::size_t trainable_count() const;
    /// trainable_count() plus the batchnorm moving statistics.
    std::size_t total_count() const;

    /// Throws ShapeError if the shapes disagree with `kind`, or std::invalid_argument if a
    /// moving variance is not strictly positive.
    void validate() const;

    template <typename U>
    LayerParams<U> cast() const {
        LayerParams<U> out;
        out.kind = kind;
        out.weights = weights.template cast<U>();
        auto conv = [](const std::vector<T>& v) { return std::vector<U>(v.begin(), v.end()); };
        out.bias = conv(bias);
        out.gamma = conv(gamma);
        out.beta = conv(beta);
        out.moving_mean = conv(moving_mean);
        out.moving_var = conv(moving_var);
        out.trainable = trainable;
        return out;
    }

    bool operator==(const LayerParams&) const = default;
};

template <typename T>
LayerParams<T> make_conv(std::size_t in, std::size_t out, std::size_t kernel);
template <typename T>
LayerParams<T> make_transposed_conv(std::size_t in, std::size_t out, std::size_t kernel);
/// gamma = 1, beta = 0, moving mean 0, moving variance 1.
template <typename T>
LayerParams<T> make_batchnorm(std::size_t channels);

/// Gradients with the same shapes as the trainable fields of LayerParams.
template <typename T>
struct LayerGrads {
    Tensor4<T> weights;
    std::vector<T> bias;
    std::vector<T> gamma;
    std::vector<T> beta;

    static LayerGrads zeros_like(const LayerParams<T>& p);
    void add(const LayerGrads& other);
};

template <typename T>
struct LayerBackward {
    Tensor4<T> grad_input;
    LayerGrads<T> grads;
};

// Convolution, stride 1, zero "same" padding.
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const LayerParams<T>& params);
template <typename T>
LayerBackward<T> conv2d_backward(const Tensor4<T>& input, const LayerParams<T>& params,
                                 const Tensor4<T>& grad_out);

// Transposed convolution, stride 2; output is exactly (2h, 2w). Kernel taps that land past
// the last row/column are cropped.
template <typename T>
Tensor4<T> transposed_conv2d_forward(const Tensor4<T>& input, const LayerParams<T>& params);
template <typename T>
LayerBackward<T> transposed_conv2d_backward(const Tensor4<T>& input, const LayerParams<T>& params,
                                            const Tensor4<T>& grad_out);

template <typename T>
struct PoolResult {
    Tensor4<T> output;
    /// Flat input index of the winning element for every output element.
    std::vector<std::uint32_t> argmax;
    Shape4 input_shape;
};

/// 2x2 max pooling, stride 2. Ties go to the first element in row-major window order.
template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor4<T>& input);
template <typename T>
Tensor4<T> maxpool2x2_backward(const PoolResult<T>& pool, const Tensor4<T>& grad_out);

template <typename T>
struct BatchNormCache {
    Mode mode = Mode::train;
    Tensor4<T> normalized;        // x_hat
    std::vector<double> mean;     // statistics actually used for normalization
    std::vector<double> var;
    std::vector<double> inv_std;
    std::size_t count = 0;        // elements per channel
};

template <typename T>
struct BatchNormResult {
    Tensor4<T> output;
    BatchNormCache<T> cache;
};

/// Train mode normalizes with the batch statistics over (n, h, w); infer mode uses the
/// moving statistics. Moving statistics are not touched here, see update_moving_statistics.
template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor4<T>& input, const LayerParams<T>& params, Mode mode,
                                     double epsilon = kBatchNormEpsilon);
template <typename T>
LayerBackward<T> batchnorm_backward(const BatchNormCache<T>& cache, const LayerParams<T>& params,
                                    const Tensor4<T>& grad_out);
/// moving = momentum * moving + (1 - momentum) * batch. The batch variance is unbiased.
template <typename T>
void update_moving_statistics(LayerParams<T>& params, const BatchNormCache<T>& cache,
                              double momentum = kBatchNormMomentum);

template <typename T>
Tensor4<T> relu_forward(const Tensor4<T>& input);
/// Derivative at 0 is taken as 0.
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out);
template <typename T>
Tensor4<T> selu_forward(const Tensor4<T>& input);
template <typename T>
Tensor4<T> selu_backward(const Tensor4<T>& input, const Tensor4<T>& grad_out);

template <typename T>
struct DropoutResult {
    Tensor4<T> output;
    /// d output / d input per element; empty when the layer acted as the identity.
    std::vector<T> gain;
};

/// Inverted dropout: survivors are scaled by 1/(1-rate). Identity in infer mode.
template <typename T>
DropoutResult<T> dropout_forward(const Tensor4<T>& input, double rate, Rng& rng, Mode mode);
/// Dropped units are set to the SELU saturation value -lambda*alpha, followed by the affine
/// correction that keeps zero mean / unit variance inputs standardized.
template <typename T>
DropoutResult<T> alpha_dropout_forward(const Tensor4<T>& input, double rate, Rng& rng, Mode mode);
template <typename T>
Tensor4<T> dropout_backward(const DropoutResult<T>& fwd, const Tensor4<T>& grad_out);

/// Per-pixel softmax across channels, max-subtracted.
template <typename T>
Tensor4<T> softmax_channels(const Tensor4<T>& logits);
template <typename T>
Tensor4<T> softmax_channels_backward(const Tensor4<T>& probabilities, const Tensor4<T>& grad_out);

}  // namespace eddynet::nn

#endif  // EDDYNET_LAYERS_HPP

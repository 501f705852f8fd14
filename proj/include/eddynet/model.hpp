#ifndef EDDYNET_MODEL_HPP
#define EDDYNET_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "eddynet/layers.hpp"
#include "eddynet/tensor.hpp"

namespace eddynet::model {

enum class Variant : std::uint32_t {
    relu_bn = 0,  // conv -> BN -> ReLU, classic dropout
    selu = 1,     // conv -> SELU, alpha dropout, BN after pool / upsample / concat
};

/// Where BN sits relative to ReLU in the relu_bn variant.
enum class BnOrder : std::uint32_t { bn_then_act = 0, act_then_bn = 1 };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

struct EddyNetConfig {
    Variant variant = Variant::relu_bn;
    int stages = 3;
    int filters = 32;
    double dropout_rate = 0.2;
    int input_h = 128;
    int input_w = 128;
    int classes = 3;
    int in_channels = 1;
    /// Transposed-convolution kernel (2 or 3), stride 2.
    int upsample_kernel = 3;
    BnOrder bn_order = BnOrder::bn_then_act;

    void validate() const;
    /// Throws ShapeError unless h and w are positive multiples of 2^stages.
    void validate_input_size(std::size_t h, std::size_t w) const;
    std::size_t size_multiple() const { return std::size_t{1} << stages; }

    bool operator==(const EddyNetConfig&) const = default;
};

template <typename T>
struct NamedLayer {
    std::string name;
    nn::LayerParams<T> params;

    bool operator==(const NamedLayer&) const = default;
};

/// Layers in topological forward order, plus the configuration that produced them.
template <typename T>
struct BasicNetworkWeights {
    EddyNetConfig config;
    std::vector<NamedLayer<T>> layers;

    std::size_t trainable_parameter_count() const;
    std::size_t total_parameter_count() const;
    std::size_t index_of(const std::string& name) const;

    template <typename U>
    BasicNetworkWeights<U> cast() const {
        BasicNetworkWeights<U> out;
        out.config = config;
        out.layers.reserve(layers.size());
        for (const auto& l : layers) out.layers.push_back({l.name, l.params.template cast<U>()});
        return out;
    }

    bool operator==(const BasicNetworkWeights&) const = default;
};

using NetworkWeights = BasicNetworkWeights<float>;

/// Allocates and initializes every layer: truncated Gaussian weights (he rule for relu_bn,
/// lecun rule for selu), zero biases, BN gamma 1 / beta 0 / moving mean 0 / moving var 1.
NetworkWeights build_model(const EddyNetConfig& config, nn::Rng& rng);
/// Same layer list with zero weights; the reference layout for file validation.
NetworkWeights build_skeleton(const EddyNetConfig& config);

struct ParameterRow {
    std::string name;
    nn::LayerKind kind;
    std::string shape;
    std::size_t trainable = 0;
    std::size_t total = 0;
};

std::vector<ParameterRow> parameter_table(const NetworkWeights& weights);
std::string format_parameter_table(const std::vector<ParameterRow>& rows);

// ---------------------------------------------------------------------------
// Forward / backward

enum class OpCode : std::uint8_t { conv, tconv, batchnorm, relu, selu, dropout, alpha_dropout, maxpool, concat, softmax };

/// One step of the fixed forward program. Slots index activations; slot 0 is the input.
struct Step {
    OpCode op;
    int layer = -1;  // index into NetworkWeights::layers, -1 for parameter-free ops
    int in = 0;
    int in2 = -1;  // second concat operand
    int out = 0;
};

struct Program {
    std::vector<Step> steps;
    int slot_count = 1;
    int output_slot = 0;
};

/// The architecture as a step list; layer indices match build_skeleton(config).layers.
Program compile(const EddyNetConfig& config);

template <typename T>
struct StepCache {
    nn::BatchNormCache<T> bn;
    std::vector<std::uint32_t> argmax;
    Shape4 pool_input;
    std::vector<T> gain;
};

template <typename T>
struct ForwardCache {
    Program program;
    nn::Mode mode = nn::Mode::infer;
    std::vector<Tensor4<T>> slots;
    std::vector<StepCache<T>> steps;
};

template <typename T>
struct ForwardResult {
    Tensor4<T> probabilities;
    ForwardCache<T> cache;
};

template <typename T>
using Gradients = std::vector<nn::LayerGrads<T>>;

/// Runs the network on an (n, in_channels, h, w) batch. Train mode samples dropout masks
/// from `rng` and normalizes with batch statistics; infer mode does neither.
template <typename T>
ForwardResult<T> forward(const BasicNetworkWeights<T>& weights, const Tensor4<T>& input, nn::Mode mode,
                         nn::Rng& rng);

/// Probabilities only; intermediate activations are released as soon as they are consumed.
template <typename T>
Tensor4<T> predict(const BasicNetworkWeights<T>& weights, const Tensor4<T>& input);

/// Gradient of a scalar loss with respect to every layer, given d loss / d probabilities.
template <typename T>
Gradients<T> backward(const BasicNetworkWeights<T>& weights, const ForwardCache<T>& cache,
                      const Tensor4<T>& grad_probabilities);

/// Folds the batch statistics recorded by a train-mode forward into the moving averages.
template <typename T>
void apply_batchnorm_updates(BasicNetworkWeights<T>& weights, const ForwardCache<T>& cache,
                             double momentum = nn::kBatchNormMomentum);

}  // namespace eddynet::model

#endif  // EDDYNET_MODEL_HPP

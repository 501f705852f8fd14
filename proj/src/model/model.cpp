#include "eddynet/model.hpp"

#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "eddynet/init.hpp"

namespace eddynet::model {

std::string to_string(Variant v) {
    switch (v) {
        case Variant::relu_bn: return "relu_bn";
        case Variant::selu: return "selu";
    }
    return "unknown";
}

Variant parse_variant(const std::string& s) {
    if (s == "relu_bn") return Variant::relu_bn;
    if (s == "selu") return Variant::selu;
    throw std::invalid_argument("unknown variant '" + s + "' (expected relu_bn or selu)");
}

void EddyNetConfig::validate() const {
    auto bad = [](const std::string& m) { throw std::invalid_argument("EddyNetConfig: " + m); };
    if (variant != Variant::relu_bn && variant != Variant::selu) bad("unknown variant");
    if (stages < 1 || stages > 16) bad("stages must be in [1, 16]");
    if (filters < 1) bad("filters must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must be in [0, 1)");
    if (classes < 2) bad("classes must be >= 2");
    if (in_channels < 1) bad("in_channels must be >= 1");
    if (upsample_kernel != 2 && upsample_kernel != 3) bad("upsample_kernel must be 2 or 3");
    if (bn_order != BnOrder::bn_then_act && bn_order != BnOrder::act_then_bn) bad("unknown bn_order");
    validate_input_size(static_cast<std::size_t>(std::max(input_h, 0)),
                        static_cast<std::size_t>(std::max(input_w, 0)));
}

void EddyNetConfig::validate_input_size(std::size_t h, std::size_t w) const {
    const std::size_t m = size_multiple();
    if (h == 0 || w == 0 || h % m != 0 || w % m != 0) {
        throw ShapeError("input size " + std::to_string(h) + "x" + std::to_string(w) +
                         " is not a positive multiple of 2^stages = " + std::to_string(m));
    }
}

template <typename T>
std::size_t BasicNetworkWeights<T>::trainable_parameter_count() const {
    std::size_t s = 0;
    for (const auto& l : layers) s += l.params.trainable_count();
    return s;
}

template <typename T>
std::size_t BasicNetworkWeights<T>::total_parameter_count() const {
    std::size_t s = 0;
    for (const auto& l : layers) s += l.params.total_count();
    return s;
}

template <typename T>
std::size_t BasicNetworkWeights<T>::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].name == name) return i;
    }
    throw std::out_of_range("no layer named '" + name + "'");
}

template struct BasicNetworkWeights<float>;
template struct BasicNetworkWeights<double>;

// ---------------------------------------------------------------------------
// Architecture

namespace {

struct LayerSpec {
    std::string name;
    nn::LayerKind kind;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t kernel = 0;
};

struct Architecture {
    Program program;
    std::vector<LayerSpec> layers;
};

class Builder {
public:
    explicit Builder(const EddyNetConfig& c) : cfg_(c) {}

    Architecture build() {
        const auto f = static_cast<std::size_t>(cfg_.filters);
        const bool selu = cfg_.variant == Variant::selu;
        int x = 0;
        std::size_t ch = static_cast<std::size_t>(cfg_.in_channels);
        std::vector<int> skips;

        for (int s = 1; s <= cfg_.stages; ++s) {
            const std::string p = "enc" + std::to_string(s);
            x = unit(x, ch, f, p, 1);
            x = unit(x, f, f, p, 2);
            x = step(selu ? OpCode::alpha_dropout : OpCode::dropout, x);
            skips.push_back(x);
            x = step(OpCode::maxpool, x);
            if (selu) x = batchnorm(x, f, p + "_pool_bn");
            ch = f;
        }
        x = unit(x, ch, f, "mid", 1);
        x = unit(x, f, f, "mid", 2);
        for (int s = cfg_.stages; s >= 1; --s) {
            const std::string p = "dec" + std::to_string(s);
            x = step(selu ? OpCode::alpha_dropout : OpCode::dropout, x);
            x = layer_step(OpCode::tconv, x,
                           {p + "_up", nn::LayerKind::transposed_conv, f, f,
                            static_cast<std::size_t>(cfg_.upsample_kernel)});
            if (selu) x = batchnorm(x, f, p + "_up_bn");
            x = concat(x, skips[static_cast<std::size_t>(s - 1)]);
            if (selu) x = batchnorm(x, 2 * f, p + "_cat_bn");
            x = unit(x, 2 * f, f, p, 1);
            x = unit(x, f, f, p, 2);
        }
        x = layer_step(OpCode::conv, x,
                       {"head_conv", nn::LayerKind::conv1x1, f, static_cast<std::size_t>(cfg_.classes), 1});
        x = step(OpCode::softmax, x);
        arch_.program.output_slot = x;
        return std::move(arch_);
    }

private:
    int fresh() { return arch_.program.slot_count++; }

    int step(OpCode op, int in) {
        const int out = fresh();
        arch_.program.steps.push_back({op, -1, in, -1, out});
        return out;
    }

    int layer_step(OpCode op, int in, LayerSpec spec) {
        const int out = fresh();
        arch_.program.steps.push_back({op, static_cast<int>(arch_.layers.size()), in, -1, out});
        arch_.layers.push_back(std::move(spec));
        return out;
    }

    int batchnorm(int in, std::size_t ch, const std::string& name) {
        return layer_step(OpCode::batchnorm, in, {name, nn::LayerKind::batchnorm, ch, ch, 0});
    }

    int concat(int a, int b) {
        const int out = fresh();
        arch_.program.steps.push_back({OpCode::concat, -1, a, b, out});
        return out;
    }

    // conv3x3 followed by the variant's activation block.
    int unit(int in, std::size_t cin, std::size_t cout, const std::string& prefix, int idx) {
        const std::string i = std::to_string(idx);
        int x = layer_step(OpCode::conv, in, {prefix + "_conv" + i, nn::LayerKind::conv3x3, cin, cout, 3});
        if (cfg_.variant == Variant::selu) return step(OpCode::selu, x);
        if (cfg_.bn_order == BnOrder::bn_then_act) {
            x = batchnorm(x, cout, prefix + "_bn" + i);
            return step(OpCode::relu, x);
        }
        x = step(OpCode::relu, x);
        return batchnorm(x, cout, prefix + "_bn" + i);
    }

    const EddyNetConfig& cfg_;
    Architecture arch_;
};

Architecture describe(const EddyNetConfig& config) {
    config.validate();
    return Builder(config).build();
}

nn::LayerParams<float> allocate(const LayerSpec& s) {
    switch (s.kind) {
        case nn::LayerKind::conv3x3:
        case nn::LayerKind::conv1x1: return nn::make_conv<float>(s.in, s.out, s.kernel);
        case nn::LayerKind::transposed_conv: return nn::make_transposed_conv<float>(s.in, s.out, s.kernel);
        case nn::LayerKind::batchnorm: return nn::make_batchnorm<float>(s.out);
    }
    throw std::invalid_argument("unknown layer kind");
}

}  // namespace

Program compile(const EddyNetConfig& config) { return describe(config).program; }

NetworkWeights build_skeleton(const EddyNetConfig& config) {
    const Architecture arch = describe(config);
    NetworkWeights w;
    w.config = config;
    for (const auto& s : arch.layers) w.layers.push_back({s.name, allocate(s)});
    return w;
}

NetworkWeights build_model(const EddyNetConfig& config, nn::Rng& rng) {
    NetworkWeights w = build_skeleton(config);
    const auto rule = config.variant == Variant::selu ? nn::VarianceRule::lecun : nn::VarianceRule::he;
    for (auto& l : w.layers) {
        if (l.params.kind == nn::LayerKind::batchnorm) continue;
        l.params.weights = nn::init_truncated_gaussian(l.params.weights.shape(), rule, nn::fan_in(l.params), rng);
    }
    return w;
}

std::vector<ParameterRow> parameter_table(const NetworkWeights& weights) {
    std::vector<ParameterRow> rows;
    for (const auto& l : weights.layers) {
        ParameterRow r;
        r.name = l.name;
        r.kind = l.params.kind;
        if (l.params.kind == nn::LayerKind::batchnorm) {
            r.shape = std::to_string(l.params.gamma.size()) + " ch";
        } else {
            const auto& s = l.params.weights.shape();
            r.shape = std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
                      std::to_string(s.w) + " + " + std::to_string(l.params.bias.size());
        }
        r.trainable = l.params.trainable_count();
        r.total = l.params.total_count();
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string format_parameter_table(const std::vector<ParameterRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "layer" << std::setw(17) << "kind" << std::setw(18) << "shape"
       << std::right << std::setw(10) << "trainable" << std::setw(10) << "total" << "\n";
    std::size_t t = 0, a = 0;
    for (const auto& r : rows) {
        os << std::left << std::setw(16) << r.name << std::setw(17) << nn::to_string(r.kind) << std::setw(18)
           << r.shape << std::right << std::setw(10) << r.trainable << std::setw(10) << r.total << "\n";
        t += r.trainable;
        a += r.total;
    }
    os << std::left << std::setw(51) << "sum" << std::right << std::setw(10) << t << std::setw(10) << a << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

template <typename T>
void run_step(const Step& st, const BasicNetworkWeights<T>& weights, std::vector<Tensor4<T>>& slots,
              StepCache<T>& cache, nn::Mode mode, double dropout_rate, nn::Rng& rng, bool keep) {
    const Tensor4<T>& x = slots[static_cast<std::size_t>(st.in)];
    Tensor4<T>& y = slots[static_cast<std::size_t>(st.out)];
    switch (st.op) {
        case OpCode::conv: y = nn::conv2d_forward(x, weights.layers[st.layer].params); break;
        case OpCode::tconv: y = nn::transposed_conv2d_forward(x, weights.layers[st.layer].params); break;
        case OpCode::batchnorm: {
            auto r = nn::batchnorm_forward(x, weights.layers[st.layer].params, mode);
            y = std::move(r.output);
            if (keep) {
                cache.bn = std::move(r.cache);
            } else {
                cache.bn.mode = r.cache.mode;
            }
            break;
        }
        case OpCode::relu: y = nn::relu_forward(x); break;
        case OpCode::selu: y = nn::selu_forward(x); break;
        case OpCode::dropout:
        case OpCode::alpha_dropout: {
            auto r = st.op == OpCode::dropout ? nn::dropout_forward(x, dropout_rate, rng, mode)
                                              : nn::alpha_dropout_forward(x, dropout_rate, rng, mode);
            y = std::move(r.output);
            if (keep) cache.gain = std::move(r.gain);
            break;
        }
        case OpCode::maxpool: {
            auto r = nn::maxpool2x2_forward(x);
            y = std::move(r.output);
            cache.pool_input = r.input_shape;
            if (keep) cache.argmax = std::move(r.argmax);
            break;
        }
        case OpCode::concat: y = concat_channels(x, slots[static_cast<std::size_t>(st.in2)]); break;
        case OpCode::softmax: y = nn::softmax_channels(x); break;
    }
}

template <typename T>
void check_input(const EddyNetConfig& cfg, const Tensor4<T>& input) {
    if (input.c() != static_cast<std::size_t>(cfg.in_channels) || input.n() == 0) {
        throw ShapeError("network input shape " + input.shape().str() + " incompatible with " +
                         std::to_string(cfg.in_channels) + " input channel(s)");
    }
    cfg.validate_input_size(input.h(), input.w());
}

template <typename T>
void accumulate(Tensor4<T>& dst, Tensor4<T>&& g) {
    if (dst.empty()) {
        dst = std::move(g);
        return;
    }
    require_shape(g.shape(), dst.shape(), "gradient accumulation");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

}  // namespace

template <typename T>
ForwardResult<T> forward(const BasicNetworkWeights<T>& weights, const Tensor4<T>& input, nn::Mode mode,
                         nn::Rng& rng) {
    check_input(weights.config, input);
    ForwardResult<T> res;
    auto& cache = res.cache;
    cache.program = compile(weights.config);
    if (cache.program.steps.empty()) throw std::logic_error("empty program");
    cache.mode = mode;
    cache.slots.resize(static_cast<std::size_t>(cache.program.slot_count));
    cache.steps.resize(cache.program.steps.size());
    cache.slots[0] = input;
    for (std::size_t i = 0; i < cache.program.steps.size(); ++i) {
        run_step(cache.program.steps[i], weights, cache.slots, cache.steps[i], mode, weights.config.dropout_rate,
                 rng, true);
    }
    res.probabilities = cache.slots[static_cast<std::size_t>(cache.program.output_slot)];
    return res;
}

template <typename T>
Tensor4<T> predict(const BasicNetworkWeights<T>& weights, const Tensor4<T>& input) {
    check_input(weights.config, input);
    const Program program = compile(weights.config);
    std::vector<std::size_t> last_use(static_cast<std::size_t>(program.slot_count), 0);
    for (std::size_t i = 0; i < program.steps.size(); ++i) {
        last_use[static_cast<std::size_t>(program.steps[i].in)] = i;
        if (program.steps[i].in2 >= 0) last_use[static_cast<std::size_t>(program.steps[i].in2)] = i;
    }
    std::vector<Tensor4<T>> slots(static_cast<std::size_t>(program.slot_count));
    slots[0] = input;
    nn::Rng unused(0);
    StepCache<T> scratch;
    for (std::size_t i = 0; i < program.steps.size(); ++i) {
        const Step& st = program.steps[i];
        run_step(st, weights, slots, scratch, nn::Mode::infer, 0.0, unused, false);
        if (last_use[static_cast<std::size_t>(st.in)] == i) slots[static_cast<std::size_t>(st.in)] = {};
        if (st.in2 >= 0 && last_use[static_cast<std::size_t>(st.in2)] == i)
            slots[static_cast<std::size_t>(st.in2)] = {};
    }
    return std::move(slots[static_cast<std::size_t>(program.output_slot)]);
}

template <typename T>
Gradients<T> backward(const BasicNetworkWeights<T>& weights, const ForwardCache<T>& cache,
                      const Tensor4<T>& grad_probabilities) {
    const Program& program = cache.program;
    const auto out_slot = static_cast<std::size_t>(program.output_slot);
    require_shape(grad_probabilities.shape(), cache.slots[out_slot].shape(), "backward grad_probabilities");

    Gradients<T> grads;
    grads.reserve(weights.layers.size());
    for (const auto& l : weights.layers) grads.push_back(nn::LayerGrads<T>::zeros_like(l.params));

    std::vector<Tensor4<T>> g(cache.slots.size());
    g[out_slot] = grad_probabilities;
    for (std::size_t k = program.steps.size(); k-- > 0;) {
        const Step& st = program.steps[k];
        const auto in = static_cast<std::size_t>(st.in);
        const auto out = static_cast<std::size_t>(st.out);
        Tensor4<T> gy = std::move(g[out]);
        if (gy.empty()) continue;
        const StepCache<T>& sc = cache.steps[k];
        const Tensor4<T>& x = cache.slots[in];
        switch (st.op) {
            case OpCode::conv: {
                auto b = nn::conv2d_backward(x, weights.layers[st.layer].params, gy);
                grads[st.layer].add(b.grads);
                accumulate(g[in], std::move(b.grad_input));
                break;
            }
            case OpCode::tconv: {
                auto b = nn::transposed_conv2d_backward(x, weights.layers[st.layer].params, gy);
                grads[st.layer].add(b.grads);
                accumulate(g[in], std::move(b.grad_input));
                break;
            }
            case OpCode::batchnorm: {
                auto b = nn::batchnorm_backward(sc.bn, weights.layers[st.layer].params, gy);
                grads[st.layer].add(b.grads);
                accumulate(g[in], std::move(b.grad_input));
                break;
            }
            case OpCode::relu: accumulate(g[in], nn::relu_backward(x, gy)); break;
            case OpCode::selu: accumulate(g[in], nn::selu_backward(x, gy)); break;
            case OpCode::dropout:
            case OpCode::alpha_dropout: {
                if (sc.gain.empty()) {
                    accumulate(g[in], std::move(gy));
                } else {
                    Tensor4<T> gi(gy.shape());
                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = gy[i] * sc.gain[i];
                    accumulate(g[in], std::move(gi));
                }
                break;
            }
            case OpCode::maxpool: {
                Tensor4<T> gi(sc.pool_input);
                for (std::size_t i = 0; i < gy.size(); ++i) gi[sc.argmax[i]] += gy[i];
                accumulate(g[in], std::move(gi));
                break;
            }
            case OpCode::concat: {
                auto [ga, gb] = split_channels(gy, x.c());
                accumulate(g[in], std::move(ga));
                accumulate(g[static_cast<std::size_t>(st.in2)], std::move(gb));
                break;
            }
            case OpCode::softmax:
                accumulate(g[in], nn::softmax_channels_backward(cache.slots[out], gy));
                break;
        }
    }
    return grads;
}

template <typename T>
void apply_batchnorm_updates(BasicNetworkWeights<T>& weights, const ForwardCache<T>& cache, double momentum) {
    if (cache.mode != nn::Mode::train) return;
    for (std::size_t k = 0; k < cache.program.steps.size(); ++k) {
        const Step& st = cache.program.steps[k];
        if (st.op != OpCode::batchnorm) continue;
        nn::update_moving_statistics(weights.layers[static_cast<std::size_t>(st.layer)].params, cache.steps[k].bn,
                                     momentum);
    }
}

#define EDDYNET_INSTANTIATE_MODEL(T)                                                                        \
    template ForwardResult<T> forward(const BasicNetworkWeights<T>&, const Tensor4<T>&, nn::Mode, nn::Rng&); \
    template Tensor4<T> predict(const BasicNetworkWeights<T>&, const Tensor4<T>&);                          \
    template Gradients<T> backward(const BasicNetworkWeights<T>&, const ForwardCache<T>&, const Tensor4<T>&); \
    template void apply_batchnorm_updates(BasicNetworkWeights<T>&, const ForwardCache<T>&, double);

EDDYNET_INSTANTIATE_MODEL(float)
EDDYNET_INSTANTIATE_MODEL(double)

#undef EDDYNET_INSTANTIATE_MODEL

}  // namespace eddynet::model

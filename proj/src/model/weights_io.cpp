#include "eddynet/weights_io.hpp"

#include <cmath>
#include <string>

namespace eddynet::model {

namespace {

constexpr std::string_view kMagic = "EDYN";
constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 4;

void write_array(ByteWriter& w, std::span<const std::uint32_t> dims, std::span<const float> data) {
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u32(d);
    for (float v : data) w.f32(v);
}

void write_vector(ByteWriter& w, const std::vector<float>& v) {
    const std::uint32_t d[1] = {static_cast<std::uint32_t>(v.size())};
    write_array(w, d, v);
}

struct Array {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;
};

Array read_array(ByteReader& r, const std::string& layer) {
    Array a;
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > kMaxRank) {
        throw FormatException(FormatError::malformed, "layer " + layer + ": array rank " + std::to_string(rank));
    }
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        a.dims.push_back(r.u32());
        count *= a.dims.back();
    }
    if (count * 4 > r.remaining()) {
        throw FormatException(FormatError::truncated, "layer " + layer + ": array of " + std::to_string(count) +
                                                          " floats exceeds remaining payload");
    }
    a.data.resize(static_cast<std::size_t>(count));
    for (auto& v : a.data) v = r.f32();
    return a;
}

std::vector<float> as_vector(const Array& a, const std::string& layer) {
    if (a.dims.size() != 1) {
        throw FormatException(FormatError::malformed, "layer " + layer + ": expected a rank-1 array");
    }
    return a.data;
}

void check_finite(const std::vector<float>& v, const std::string& layer) {
    for (float x : v) {
        if (!std::isfinite(x)) throw FormatException(FormatError::invalid_value, "layer " + layer + ": non-finite value");
    }
}

void match_layout(const NetworkWeights& got, const NetworkWeights& reference, const std::string& context) {
    if (got.layers.size() != reference.layers.size()) {
        throw FormatException(FormatError::layer_mismatch,
                              context + ": " + std::to_string(got.layers.size()) + " layers, expected " +
                                  std::to_string(reference.layers.size()));
    }
    for (std::size_t i = 0; i < got.layers.size(); ++i) {
        const auto& a = got.layers[i];
        const auto& b = reference.layers[i];
        if (a.name != b.name || a.params.kind != b.params.kind) {
            throw FormatException(FormatError::layer_mismatch, context + ": layer " + std::to_string(i) + " is '" +
                                                                   a.name + "', expected '" + b.name + "'");
        }
    }
    for (std::size_t i = 0; i < got.layers.size(); ++i) {
        const auto& a = got.layers[i].params;
        const auto& b = reference.layers[i].params;
        if (a.weights.shape() != b.weights.shape() || a.bias.size() != b.bias.size() ||
            a.gamma.size() != b.gamma.size()) {
            throw FormatException(FormatError::shape_mismatch,
                                  context + ": layer '" + got.layers[i].name + "' has weights " +
                                      a.weights.shape().str() + ", expected " + b.weights.shape().str());
        }
    }
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const NetworkWeights& weights) {
    ByteWriter w;
    w.magic(kMagic);
    w.u32(kWeightsFormatVersion);
    const auto& c = weights.config;
    w.u32(static_cast<std::uint32_t>(c.variant));
    w.u32(static_cast<std::uint32_t>(c.stages));
    w.u32(static_cast<std::uint32_t>(c.filters));
    w.u32(static_cast<std::uint32_t>(c.input_h));
    w.u32(static_cast<std::uint32_t>(c.input_w));
    w.u32(static_cast<std::uint32_t>(c.classes));
    w.u32(static_cast<std::uint32_t>(c.in_channels));
    w.u32(static_cast<std::uint32_t>(c.upsample_kernel));
    w.u32(static_cast<std::uint32_t>(c.bn_order));
    w.f64(c.dropout_rate);
    w.u32(static_cast<std::uint32_t>(weights.layers.size()));
    for (const auto& l : weights.layers) {
        w.u32(static_cast<std::uint32_t>(l.name.size()));
        w.bytes(l.name.data(), l.name.size());
        w.u32(static_cast<std::uint32_t>(l.params.kind));
        if (l.params.kind == nn::LayerKind::batchnorm) {
            w.u32(4);
            write_vector(w, l.params.gamma);
            write_vector(w, l.params.beta);
            write_vector(w, l.params.moving_mean);
            write_vector(w, l.params.moving_var);
        } else {
            w.u32(2);
            const auto& s = l.params.weights.shape();
            const std::uint32_t dims[4] = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                           static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
            write_array(w, dims, l.params.weights.span());
            write_vector(w, l.params.bias);
        }
    }
    w.seal();
    return w.take();
}

NetworkWeights decode_weights(std::span<const std::uint8_t> bytes, const std::optional<EddyNetConfig>& expected) {
    const SealedPayload sealed = open_sealed(bytes, kMagic, kWeightsFormatVersion, "weights file");
    ByteReader r(sealed.body);
    r.bytes(kMagic.size() + 4);

    NetworkWeights out;
    auto& c = out.config;
    c.variant = static_cast<Variant>(r.u32());
    c.stages = static_cast<int>(r.u32());
    c.filters = static_cast<int>(r.u32());
    c.input_h = static_cast<int>(r.u32());
    c.input_w = static_cast<int>(r.u32());
    c.classes = static_cast<int>(r.u32());
    c.in_channels = static_cast<int>(r.u32());
    c.upsample_kernel = static_cast<int>(r.u32());
    c.bn_order = static_cast<BnOrder>(r.u32());
    c.dropout_rate = r.f64();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedLayer<float> l;
        const std::uint32_t len = r.u32();
        if (len == 0 || len > kMaxNameLength) {
            throw FormatException(FormatError::malformed, "layer " + std::to_string(i) + ": name length " +
                                                              std::to_string(len));
        }
        auto name = r.bytes(len);
        l.name.assign(name.begin(), name.end());
        const std::uint32_t kind = r.u32();
        if (kind > static_cast<std::uint32_t>(nn::LayerKind::batchnorm)) {
            throw FormatException(FormatError::malformed, "layer " + l.name + ": unknown kind " + std::to_string(kind));
        }
        l.params.kind = static_cast<nn::LayerKind>(kind);
        const std::uint32_t arrays = r.u32();
        if (l.params.kind == nn::LayerKind::batchnorm) {
            if (arrays != 4) throw FormatException(FormatError::malformed, "layer " + l.name + ": expected 4 arrays");
            l.params.gamma = as_vector(read_array(r, l.name), l.name);
            l.params.beta = as_vector(read_array(r, l.name), l.name);
            l.params.moving_mean = as_vector(read_array(r, l.name), l.name);
            l.params.moving_var = as_vector(read_array(r, l.name), l.name);
        } else {
            if (arrays != 2) throw FormatException(FormatError::malformed, "layer " + l.name + ": expected 2 arrays");
            Array wa = read_array(r, l.name);
            if (wa.dims.size() != 4) {
                throw FormatException(FormatError::malformed, "layer " + l.name + ": weights must be rank 4");
            }
            l.params.weights = Tensor(Shape4{wa.dims[0], wa.dims[1], wa.dims[2], wa.dims[3]}, std::move(wa.data));
            l.params.bias = as_vector(read_array(r, l.name), l.name);
        }
        out.layers.push_back(std::move(l));
    }
    if (r.remaining() != 0) {
        throw FormatException(FormatError::malformed,
                              std::to_string(r.remaining()) + " unexpected bytes before the checksum");
    }
    verify_seal(sealed, "weights file");

    try {
        c.validate();
    } catch (const std::exception& e) {
        throw FormatException(FormatError::malformed, std::string("config block: ") + e.what());
    }
    for (const auto& l : out.layers) {
        check_finite(l.params.weights.vec(), l.name);
        check_finite(l.params.bias, l.name);
        check_finite(l.params.gamma, l.name);
        check_finite(l.params.beta, l.name);
        check_finite(l.params.moving_mean, l.name);
        check_finite(l.params.moving_var, l.name);
        try {
            l.params.validate();
        } catch (const ShapeError& e) {
            throw FormatException(FormatError::malformed, e.what());
        } catch (const std::invalid_argument& e) {
            throw FormatException(FormatError::invalid_value, "layer " + l.name + ": " + e.what());
        }
    }
    match_layout(out, build_skeleton(c), "weights file vs its own header");
    if (expected) match_layout(out, build_skeleton(*expected), "weights file vs expected configuration");
    return out;
}

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path) {
    write_file(path, encode_weights(weights));
}

NetworkWeights load_weights(const std::filesystem::path& path, const std::optional<EddyNetConfig>& expected) {
    return decode_weights(read_file(path), expected);
}

}  // namespace eddynet::model

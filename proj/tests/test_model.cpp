#include <gtest/gtest.h>

#include "eddynet/binary_io.hpp"
#include "eddynet/grad_suite.hpp"
#include "eddynet/model.hpp"
#include "eddynet/weights_io.hpp"
#include "test_util.hpp"

using namespace eddynet;
using namespace eddynet::model;
using eddynet::testing::random_tensor;

namespace {

EddyNetConfig config_of(Variant v, int upsample = 3) {
    EddyNetConfig c;
    c.variant = v;
    c.upsample_kernel = upsample;
    return c;
}

void expect_probability_map(const Tensor& p, std::size_t n, std::size_t h, std::size_t w) {
    ASSERT_EQ(p.shape(), (Shape4{n, 3, h, w}));
    ASSERT_TRUE(p.all_finite());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < h * w; ++i) {
            const double s = double(p.plane(b, 0)[i]) + p.plane(b, 1)[i] + p.plane(b, 2)[i];
            ASSERT_NEAR(s, 1.0, 1e-6);
        }
}

}  // namespace

TEST(Architecture, ParameterCounts) {
    // Three-by-three upsampling (the default).
    EXPECT_EQ(build_skeleton(config_of(Variant::selu)).total_parameter_count(), 177571u);
    EXPECT_EQ(build_skeleton(config_of(Variant::relu_bn)).total_parameter_count(), 177827u);
    EXPECT_EQ(build_skeleton(config_of(Variant::relu_bn)).trainable_parameter_count(), 176931u);
    // Two-by-two upsampling.
    EXPECT_EQ(build_skeleton(config_of(Variant::relu_bn, 2)).total_parameter_count(), 162467u);
    EXPECT_EQ(build_skeleton(config_of(Variant::selu, 2)).total_parameter_count(), 162211u);
}

TEST(Architecture, TableSumsMatchCounts) {
    const auto w = build_skeleton(config_of(Variant::selu));
    std::size_t t = 0, a = 0;
    for (const auto& r : parameter_table(w)) {
        t += r.trainable;
        a += r.total;
    }
    EXPECT_EQ(t, w.trainable_parameter_count());
    EXPECT_EQ(a, w.total_parameter_count());
    EXPECT_NE(format_parameter_table(parameter_table(w)).find("177571"), std::string::npos);
}

TEST(Architecture, LayerOrderIsTopological) {
    const auto w = build_skeleton(config_of(Variant::relu_bn));
    EXPECT_EQ(w.layers.front().name, "enc1_conv1");
    EXPECT_EQ(w.layers.back().name, "head_conv");
    EXPECT_LT(w.index_of("enc3_conv2"), w.index_of("mid_conv1"));
    EXPECT_LT(w.index_of("mid_conv2"), w.index_of("dec3_up"));
    EXPECT_LT(w.index_of("dec3_conv2"), w.index_of("dec2_up"));
}

TEST(Architecture, ConfigValidation) {
    EddyNetConfig c;
    c.stages = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    c.dropout_rate = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = {};
    EXPECT_THROW(c.validate_input_size(100, 128), ShapeError);
    EXPECT_NO_THROW(c.validate_input_size(120, 120));
}

TEST(Forward, DefaultSizesGiveProbabilityMaps) {
    for (auto v : {Variant::relu_bn, Variant::selu}) {
        nn::Rng rng(1);
        const auto w = build_model(config_of(v), rng);
        for (std::size_t s : {128u, 120u}) {
            const Tensor x = random_tensor<float>({1, 1, s, s}, 2, 0.2);
            expect_probability_map(predict(w, x), 1, s, s);
        }
    }
}

TEST(Forward, IndivisibleSizeRejected) {
    nn::Rng rng(1);
    const auto w = build_model({}, rng);
    EXPECT_THROW(predict(w, Tensor(1, 1, 100, 128)), ShapeError);
    EXPECT_THROW(predict(w, Tensor(1, 2, 128, 128)), ShapeError);
}

TEST(Forward, ZeroInputAndDeterminism) {
    nn::Rng rng(3);
    const auto w = build_model(config_of(Variant::selu), rng);
    expect_probability_map(predict(w, Tensor(2, 1, 64, 64)), 2, 64, 64);
    const Tensor x = random_tensor<float>({2, 1, 64, 64}, 4);
    EXPECT_EQ(predict(w, x), predict(w, x));
    nn::Rng a(5), b(6);
    EXPECT_EQ(forward(w, x, nn::Mode::infer, a).probabilities, predict(w, x));
    EXPECT_EQ(forward(w, x, nn::Mode::infer, b).probabilities, predict(w, x));
}

TEST(Forward, TrainModeFiniteProbabilities) {
    for (auto v : {Variant::relu_bn, Variant::selu}) {
        nn::Rng rng(7);
        const auto w = build_model(config_of(v), rng);
        const auto r = forward(w, random_tensor<float>({4, 1, 32, 32}, 8), nn::Mode::train, rng);
        expect_probability_map(r.probabilities, 4, 32, 32);
    }
}

TEST(Backward, ZeroCotangentAndShapes) {
    nn::Rng rng(9);
    const auto w = build_model(config_of(Variant::relu_bn), rng);
    const auto r = forward(w, random_tensor<float>({2, 1, 16, 16}, 10), nn::Mode::train, rng);
    const auto g = backward(w, r.cache, Tensor(2, 3, 16, 16));
    ASSERT_EQ(g.size(), w.layers.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        EXPECT_EQ(g[i].weights.shape(), w.layers[i].params.weights.shape()) << w.layers[i].name;
        EXPECT_EQ(g[i].bias.size(), w.layers[i].params.bias.size());
        EXPECT_EQ(g[i].gamma.size(), w.layers[i].params.gamma.size());
        for (float v : g[i].weights.vec()) ASSERT_EQ(v, 0.0f);
        for (float v : g[i].beta) ASSERT_EQ(v, 0.0f);
    }
}

TEST(Backward, TinyNetworkFiniteDifferences) {
    const verify::SuiteOptions opt;
    for (auto v : {Variant::relu_bn, Variant::selu}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto r = verify::check_network(v, seed, opt.network);
            EXPECT_TRUE(r.pass) << to_string(v) << " seed " << seed << " " << r.worst;
        }
    }
}

TEST(BatchNormUpdates, OnlyTrainModeMovesStatistics) {
    nn::Rng rng(11);
    auto w = build_model(config_of(Variant::relu_bn), rng);
    const auto before = w;
    const Tensor x = random_tensor<float>({2, 1, 16, 16}, 12);
    apply_batchnorm_updates(w, forward(w, x, nn::Mode::infer, rng).cache);
    EXPECT_EQ(w, before);
    apply_batchnorm_updates(w, forward(w, x, nn::Mode::train, rng).cache, 1.0);
    EXPECT_EQ(w, before);
    apply_batchnorm_updates(w, forward(w, x, nn::Mode::train, rng).cache);
    EXPECT_NE(w.layers[w.index_of("enc1_bn1")].params.moving_mean, before.layers[w.index_of("enc1_bn1")].params.moving_mean);
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

FormatError decode_error(const std::vector<std::uint8_t>& bytes, std::optional<EddyNetConfig> expected = std::nullopt) {
    try {
        decode_weights(bytes, expected);
    } catch (const FormatException& e) {
        return e.code();
    }
    ADD_FAILURE() << "decode succeeded";
    return FormatError::io_error;
}

std::vector<std::uint8_t> reseal(std::vector<std::uint8_t> b) {
    b.resize(b.size() - 4);
    const std::uint32_t c = crc32(b);
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(c >> (8 * i)));
    return b;
}

}  // namespace

TEST(WeightsIo, RoundTripIsBitExact) {
    for (auto v : {Variant::relu_bn, Variant::selu}) {
        nn::Rng rng(13);
        auto w = build_model(config_of(v), rng);
        for (auto& l : w.layers)
            if (l.params.kind == nn::LayerKind::batchnorm) {
                l.params.moving_var[0] = 0.37f;
                break;
            }
        const auto bytes = encode_weights(w);
        const auto back = decode_weights(bytes);
        EXPECT_EQ(back, w);
        EXPECT_EQ(encode_weights(back), bytes);
    }
}

TEST(WeightsIo, FileRoundTrip) {
    nn::Rng rng(14);
    const auto w = build_model(config_of(Variant::selu), rng);
    const auto path = std::filesystem::temp_directory_path() / "eddynet_test_weights.edyn";
    save_weights(w, path);
    EXPECT_EQ(load_weights(path), w);
    EXPECT_EQ(read_file(path), encode_weights(w));
    std::filesystem::remove(path);
    try {
        load_weights(path);
        FAIL();
    } catch (const FormatException& e) {
        EXPECT_EQ(e.code(), FormatError::io_error);
    }
}

TEST(WeightsIo, CorruptionCodes) {
    nn::Rng rng(15);
    const auto w = build_model(config_of(Variant::relu_bn), rng);
    const auto good = encode_weights(w);

    auto b = good;
    b[0] = 'X';
    EXPECT_EQ(decode_error(b), FormatError::bad_magic);

    b = good;
    b[4] = 9;
    EXPECT_EQ(decode_error(reseal(b)), FormatError::unsupported_version);

    EXPECT_EQ(decode_error({good.begin(), good.begin() + 3}), FormatError::truncated);
    EXPECT_EQ(decode_error({good.begin(), good.begin() + good.size() / 2}), FormatError::truncated);

    b = good;
    b[good.size() / 2] ^= 0x40;
    EXPECT_EQ(decode_error(b), FormatError::checksum_mismatch);

    b = good;
    b.insert(b.end() - 4, 0);
    EXPECT_EQ(decode_error(reseal(b)), FormatError::malformed);
}

TEST(WeightsIo, NonFiniteValueRejected) {
    nn::Rng rng(16);
    auto w = build_model(config_of(Variant::relu_bn), rng);
    w.layers[0].params.weights[0] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_EQ(decode_error(encode_weights(w)), FormatError::invalid_value);
}

TEST(WeightsIo, CrossVariantRejected) {
    nn::Rng rng(17);
    const auto selu = build_model(config_of(Variant::selu), rng);
    EXPECT_EQ(decode_error(encode_weights(selu), config_of(Variant::relu_bn)), FormatError::layer_mismatch);
    // Header claims relu_bn but the layers are the selu ones.
    auto forged = selu;
    forged.config.variant = Variant::relu_bn;
    EXPECT_EQ(decode_error(encode_weights(forged)), FormatError::layer_mismatch);
}

TEST(WeightsIo, ShapeMismatchRejected) {
    nn::Rng rng(18);
    const auto w = build_model(config_of(Variant::relu_bn), rng);
    EXPECT_EQ(decode_error(encode_weights(w), config_of(Variant::relu_bn, 2)), FormatError::shape_mismatch);
}

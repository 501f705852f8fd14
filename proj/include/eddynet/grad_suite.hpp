#ifndef EDDYNET_GRAD_SUITE_HPP
#define EDDYNET_GRAD_SUITE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "eddynet/grad_check.hpp"
#include "eddynet/losses.hpp"
#include "eddynet/model.hpp"

namespace eddynet::verify {

struct SuiteOptions {
    std::size_t seeds = 20;
    std::uint64_t base_seed = 0;
    nn::GradCheckOptions layer{1e-3, 1e-4, 1e-8};
    /// Smaller step for the whole network: perturbing one weight shifts many pre-activations,
    /// so a wide step is more likely to straddle a ReLU or max-pool switch.
    nn::GradCheckOptions network{1e-6, 1e-3, 1e-6};
};

struct SuiteEntry {
    std::string name;
    std::size_t runs = 0;
    std::size_t checked = 0;
    double max_relative_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string worst;
};

struct SuiteReport {
    std::vector<SuiteEntry> entries;
    bool pass = false;
    double seconds = 0.0;
};

/// Random layer fixture for `op` from `seed`: small shapes, inputs kept at least 10 steps
/// away from activation kinks and max-pool ties.
struct LayerFixture {
    Tensor4<double> input;
    nn::LayerParams<double> params;
};
LayerFixture make_layer_fixture(nn::CheckedOp op, std::uint64_t seed, double step);

/// d loss / d probabilities against finite differences, on softmax-distributed probabilities
/// and a random one-hot target.
nn::GradCheckReport check_loss(loss::LossKind kind, std::uint64_t seed, const nn::GradCheckOptions& options = {});

/// The tiny network: 1 stage, 2 filters, 8x8 input, batch 2. Train mode with a replayed
/// dropout mask; dice loss against a random target. Checks every trainable array.
model::EddyNetConfig tiny_config(model::Variant variant);
nn::GradCheckReport check_network(model::Variant variant, std::uint64_t seed, const nn::GradCheckOptions& options);

SuiteReport run_gradient_suite(const SuiteOptions& options = {},
                               const std::function<void(const SuiteEntry&)>& on_entry = {});

std::string format_suite(const SuiteReport& report);

}  // namespace eddynet::verify

#endif  // EDDYNET_GRAD_SUITE_HPP

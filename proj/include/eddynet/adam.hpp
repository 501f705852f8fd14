#ifndef EDDYNET_ADAM_HPP
#define EDDYNET_ADAM_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace eddynet::nn {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moments over a flat parameter vector. When several tensors are updated
/// together their moments are laid out back to back in call order.
struct AdamState {
    AdamHyper hyper;
    std::vector<float> first_moment;
    std::vector<float> second_moment;
    std::int64_t step_count = 0;

    AdamState() = default;
    AdamState(std::size_t parameter_count, AdamHyper h)
        : hyper(h), first_moment(parameter_count, 0.0f), second_moment(parameter_count, 0.0f) {}
};

/// One bias-corrected ADAM update of all tensors in `params`; step_count advances by one.
void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               AdamState& state);
void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state);

}  // namespace eddynet::nn

#endif  // EDDYNET_ADAM_HPP

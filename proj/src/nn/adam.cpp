#include "eddynet/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace eddynet::nn {

void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameter tensors but " +
                                    std::to_string(grads.size()) + " gradient tensors");
    }
    std::size_t total = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size()) {
            throw std::invalid_argument("adam_step: tensor " + std::to_string(k) + " has " +
                                        std::to_string(params[k].size()) + " parameters and " +
                                        std::to_string(grads[k].size()) + " gradients");
        }
        total += params[k].size();
    }
    if (total != state.first_moment.size() || total != state.second_moment.size()) {
        throw std::invalid_argument("adam_step: state sized for " + std::to_string(state.first_moment.size()) +
                                    " parameters, got " + std::to_string(total));
    }

    const auto& h = state.hyper;
    const std::int64_t t = ++state.step_count;
    const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        auto g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i, ++offset) {
            const double gi = g[i];
            const double m = h.beta1 * state.first_moment[offset] + (1.0 - h.beta1) * gi;
            const double v = h.beta2 * state.second_moment[offset] + (1.0 - h.beta2) * gi * gi;
            state.first_moment[offset] = static_cast<float>(m);
            state.second_moment[offset] = static_cast<float>(v);
            const double m_hat = m / c1;
            const double v_hat = v / c2;
            p[i] = static_cast<float>(p[i] - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon));
        }
    }
}

void adam_step(std::span<float> params, std::span<const float> grads, AdamState& state) {
    const std::span<float> p[1] = {params};
    const std::span<const float> g[1] = {grads};
    adam_step(std::span<const std::span<float>>(p), std::span<const std::span<const float>>(g), state);
}

}  // namespace eddynet::nn

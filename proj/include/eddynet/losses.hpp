#ifndef EDDYNET_LOSSES_HPP
#define EDDYNET_LOSSES_HPP

#include <array>
#include <string>
#include <vector>

#include "eddynet/tensor.hpp"

namespace eddynet::loss {

enum class LossKind { dice, cce };
std::string to_string(LossKind k);
LossKind parse_loss(const std::string& s);

/// Smoothing added to the soft dice numerator and denominator. Zero keeps the closed-form
/// values exact; a class with no prediction mass and no ground truth scores 1.
inline constexpr double kDiceSmoothing = 0.0;
inline constexpr double kCceClip = 1e-7;

template <typename T>
struct LossValue {
    double loss = 0.0;
    Tensor4<T> grad;  // d loss / d probabilities
};

/// 2 sum(p g) / (sum(p) + sum(g)) for one channel, summed over every pixel of the batch.
template <typename T>
double soft_dice(const Tensor4<T>& probabilities, const Tensor4<T>& target, std::size_t class_id,
                 double smoothing = kDiceSmoothing);

/// 1 - mean over classes of soft_dice, with its quotient-rule gradient.
template <typename T>
LossValue<T> dice_loss(const Tensor4<T>& probabilities, const Tensor4<T>& target,
                       double smoothing = kDiceSmoothing);

/// Mean over pixels of -sum_c g log(clip(p)); clipped entries get zero gradient.
template <typename T>
LossValue<T> categorical_cross_entropy(const Tensor4<T>& probabilities, const Tensor4<T>& target);

template <typename T>
LossValue<T> compute_loss(LossKind kind, const Tensor4<T>& probabilities, const Tensor4<T>& target);

/// Streams batches and reports the loss as if all of them had been one batch.
class LossAccumulator {
public:
    explicit LossAccumulator(LossKind kind, double smoothing = kDiceSmoothing)
        : kind_(kind), smoothing_(smoothing) {}

    void add(const Tensor4<float>& probabilities, const Tensor4<float>& target);
    double value() const;
    /// Pooled soft dice of one class (dice kind only).
    double soft_dice(std::size_t class_id) const;

private:
    LossKind kind_;
    double smoothing_;
    std::vector<double> intersection_, pred_sum_, truth_sum_;
    double cce_sum_ = 0.0;
    std::size_t pixels_ = 0;
};

}  // namespace eddynet::loss

#endif  // EDDYNET_LOSSES_HPP

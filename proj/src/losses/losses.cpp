#include "eddynet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eddynet::loss {

std::string to_string(LossKind k) { return k == LossKind::dice ? "dice" : "cce"; }

LossKind parse_loss(const std::string& s) {
    if (s == "dice") return LossKind::dice;
    if (s == "cce") return LossKind::cce;
    throw std::invalid_argument("unknown loss '" + s + "' (expected dice or cce)");
}

namespace {

template <typename T>
void check_pair(const Tensor4<T>& p, const Tensor4<T>& g, const char* op) {
    if (p.shape() != g.shape()) {
        throw ShapeError(std::string(op) + ": probabilities " + p.shape().str() + " vs target " + g.shape().str());
    }
}

struct DiceSums {
    double intersection = 0.0;
    double pred = 0.0;
    double truth = 0.0;
};

template <typename T>
DiceSums dice_sums(const Tensor4<T>& p, const Tensor4<T>& g, std::size_t c) {
    DiceSums s;
    const std::size_t plane = p.shape().plane();
    for (std::size_t n = 0; n < p.n(); ++n) {
        const T* pp = p.plane(n, c);
        const T* gg = g.plane(n, c);
        for (std::size_t i = 0; i < plane; ++i) {
            s.intersection += static_cast<double>(pp[i]) * gg[i];
            s.pred += pp[i];
            s.truth += gg[i];
        }
    }
    return s;
}

double dice_from_sums(const DiceSums& s, double smoothing) {
    const double denom = s.pred + s.truth + smoothing;
    if (denom == 0.0) return 1.0;
    return (2.0 * s.intersection + smoothing) / denom;
}

}  // namespace

template <typename T>
double soft_dice(const Tensor4<T>& probabilities, const Tensor4<T>& target, std::size_t class_id, double smoothing) {
    check_pair(probabilities, target, "soft_dice");
    if (class_id >= probabilities.c()) {
        throw std::out_of_range("soft_dice: class " + std::to_string(class_id) + " out of range");
    }
    return dice_from_sums(dice_sums(probabilities, target, class_id), smoothing);
}

template <typename T>
LossValue<T> dice_loss(const Tensor4<T>& probabilities, const Tensor4<T>& target, double smoothing) {
    check_pair(probabilities, target, "dice_loss");
    const std::size_t C = probabilities.c(), plane = probabilities.shape().plane();
    if (C == 0) throw ShapeError("dice_loss: no channels");
    LossValue<T> out;
    out.grad = Tensor4<T>(probabilities.shape());
    double mean = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        const DiceSums s = dice_sums(probabilities, target, c);
        mean += dice_from_sums(s, smoothing);
        const double denom = s.pred + s.truth + smoothing;
        if (denom == 0.0) continue;
        const double num = 2.0 * s.intersection + smoothing;
        // d dice / d p_i = (2 g_i denom - num) / denom^2, scaled by -1/C.
        const double scale = -1.0 / (static_cast<double>(C) * denom * denom);
        const T on = static_cast<T>(scale * (2.0 * denom - num));
        const T off = static_cast<T>(scale * (-num));
        for (std::size_t n = 0; n < probabilities.n(); ++n) {
            const T* gg = target.plane(n, c);
            T* d = out.grad.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                // Targets are binary; interpolate for soft targets.
                d[i] = gg[i] == T(0) ? off : (gg[i] == T(1) ? on : static_cast<T>(off + gg[i] * (on - off)));
            }
        }
    }
    out.loss = 1.0 - mean / static_cast<double>(C);
    return out;
}

template <typename T>
LossValue<T> categorical_cross_entropy(const Tensor4<T>& probabilities, const Tensor4<T>& target) {
    check_pair(probabilities, target, "categorical_cross_entropy");
    const std::size_t C = probabilities.c(), plane = probabilities.shape().plane();
    const std::size_t pixels = probabilities.n() * plane;
    if (pixels == 0) throw ShapeError("categorical_cross_entropy: empty input");
    LossValue<T> out;
    out.grad = Tensor4<T>(probabilities.shape());
    const double inv = 1.0 / static_cast<double>(pixels);
    double total = 0.0;
    for (std::size_t n = 0; n < probabilities.n(); ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const T* pp = probabilities.plane(n, c);
            const T* gg = target.plane(n, c);
            T* d = out.grad.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                if (gg[i] == T(0)) continue;
                const double p = pp[i];
                const double clipped = std::clamp(p, kCceClip, 1.0 - kCceClip);
                total -= gg[i] * std::log(clipped);
                if (p >= kCceClip && p <= 1.0 - kCceClip) d[i] = static_cast<T>(-gg[i] * inv / p);
            }
        }
    }
    out.loss = total * inv;
    return out;
}

template <typename T>
LossValue<T> compute_loss(LossKind kind, const Tensor4<T>& probabilities, const Tensor4<T>& target) {
    return kind == LossKind::dice ? dice_loss(probabilities, target) : categorical_cross_entropy(probabilities, target);
}

#define EDDYNET_INSTANTIATE_LOSSES(T)                                                                      \
    template double soft_dice(const Tensor4<T>&, const Tensor4<T>&, std::size_t, double);                 \
    template LossValue<T> dice_loss(const Tensor4<T>&, const Tensor4<T>&, double);                        \
    template LossValue<T> categorical_cross_entropy(const Tensor4<T>&, const Tensor4<T>&);                \
    template LossValue<T> compute_loss(LossKind, const Tensor4<T>&, const Tensor4<T>&);

EDDYNET_INSTANTIATE_LOSSES(float)
EDDYNET_INSTANTIATE_LOSSES(double)

#undef EDDYNET_INSTANTIATE_LOSSES

void LossAccumulator::add(const Tensor4<float>& probabilities, const Tensor4<float>& target) {
    check_pair(probabilities, target, "LossAccumulator::add");
    const std::size_t C = probabilities.c();
    if (kind_ == LossKind::dice) {
        if (intersection_.empty()) {
            intersection_.assign(C, 0.0);
            pred_sum_.assign(C, 0.0);
            truth_sum_.assign(C, 0.0);
        } else if (intersection_.size() != C) {
            throw ShapeError("LossAccumulator::add: channel count changed");
        }
        for (std::size_t c = 0; c < C; ++c) {
            const DiceSums s = dice_sums(probabilities, target, c);
            intersection_[c] += s.intersection;
            pred_sum_[c] += s.pred;
            truth_sum_[c] += s.truth;
        }
    } else {
        const std::size_t pixels = probabilities.n() * probabilities.shape().plane();
        cce_sum_ += categorical_cross_entropy(probabilities, target).loss * static_cast<double>(pixels);
        pixels_ += pixels;
    }
}

double LossAccumulator::soft_dice(std::size_t class_id) const {
    if (kind_ != LossKind::dice || class_id >= intersection_.size()) {
        throw std::out_of_range("LossAccumulator::soft_dice: no dice sums for class " + std::to_string(class_id));
    }
    return dice_from_sums({intersection_[class_id], pred_sum_[class_id], truth_sum_[class_id]}, smoothing_);
}

double LossAccumulator::value() const {
    if (kind_ == LossKind::dice) {
        if (intersection_.empty()) throw std::logic_error("LossAccumulator::value: nothing accumulated");
        double mean = 0.0;
        for (std::size_t c = 0; c < intersection_.size(); ++c) mean += soft_dice(c);
        return 1.0 - mean / static_cast<double>(intersection_.size());
    }
    if (pixels_ == 0) throw std::logic_error("LossAccumulator::value: nothing accumulated");
    return cce_sum_ / static_cast<double>(pixels_);
}

}  // namespace eddynet::loss

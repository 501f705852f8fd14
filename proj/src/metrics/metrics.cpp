#include "eddynet/metrics.hpp"

#include <stdexcept>
#include <string>

namespace eddynet::metrics {

namespace {

void check_class(std::uint8_t class_id) {
    if (class_id >= kNumClasses) throw std::out_of_range("class id " + std::to_string(class_id) + " out of range");
}

}  // namespace

double hard_dice(const SegmentationMask& pred, const SegmentationMask& truth, std::uint8_t class_id) {
    require_same_shape(pred, truth, "hard_dice");
    check_class(class_id);
    std::uint64_t p = 0, g = 0, both = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool a = pred.values[i] == class_id;
        const bool b = truth.values[i] == class_id;
        p += a;
        g += b;
        both += a && b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double global_accuracy(const SegmentationMask& pred, const SegmentationMask& truth) {
    require_same_shape(pred, truth, "global_accuracy");
    if (pred.values.empty()) throw ShapeError("global_accuracy: empty masks");
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < pred.values.size(); ++i) hits += pred.values[i] == truth.values[i];
    return static_cast<double>(hits) / static_cast<double>(pred.values.size());
}

void ClassCounts::add(const SegmentationMask& pred, const SegmentationMask& truth_mask) {
    require_same_shape(pred, truth_mask, "ClassCounts::add");
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const std::uint8_t a = pred.values[i];
        const std::uint8_t b = truth_mask.values[i];
        if (a >= kNumClasses || b >= kNumClasses) {
            throw std::invalid_argument("ClassCounts::add: label outside {0,1,2} at cell " + std::to_string(i));
        }
        ++predicted[a];
        ++truth[b];
        if (a == b) {
            ++intersection[a];
            ++correct;
        }
    }
    total += pred.values.size();
}

void ClassCounts::add(const ClassCounts& o) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        predicted[c] += o.predicted[c];
        truth[c] += o.truth[c];
        intersection[c] += o.intersection[c];
    }
    correct += o.correct;
    total += o.total;
}

double ClassCounts::dice(std::uint8_t class_id) const {
    check_class(class_id);
    const std::uint64_t denom = predicted[class_id] + truth[class_id];
    if (denom == 0) return 1.0;
    return 2.0 * static_cast<double>(intersection[class_id]) / static_cast<double>(denom);
}

double ClassCounts::accuracy() const {
    if (total == 0) throw std::logic_error("ClassCounts::accuracy: no pixels counted");
    return static_cast<double>(correct) / static_cast<double>(total);
}

MetricReport metric_report(const ClassCounts& counts) {
    MetricReport r;
    double sum = 0.0;
    for (std::uint8_t c = 0; c < kNumClasses; ++c) {
        r.dice[c] = counts.dice(c);
        sum += r.dice[c];
    }
    r.mean_dice = sum / static_cast<double>(kNumClasses);
    r.global_accuracy = counts.accuracy();
    return r;
}

MetricReport metric_report(const SegmentationMask& pred, const SegmentationMask& truth) {
    ClassCounts counts;
    counts.add(pred, truth);
    return metric_report(counts);
}

}  // namespace eddynet::metrics

#ifndef EDDYNET_METRICS_HPP
#define EDDYNET_METRICS_HPP

#include <array>
#include <cstdint>
#include <optional>

#include "eddynet/field.hpp"

namespace eddynet::metrics {

/// 2|P n G| / (|P| + |G|) for one class; 1.0 when the class is absent from both.
double hard_dice(const SegmentationMask& pred, const SegmentationMask& truth, std::uint8_t class_id);
/// Fraction of cells whose labels agree.
double global_accuracy(const SegmentationMask& pred, const SegmentationMask& truth);

/// Per-class pixel tallies; pooling several masks is just adding them.
struct ClassCounts {
    std::array<std::uint64_t, kNumClasses> predicted{};
    std::array<std::uint64_t, kNumClasses> truth{};
    std::array<std::uint64_t, kNumClasses> intersection{};
    std::uint64_t correct = 0;
    std::uint64_t total = 0;

    void add(const SegmentationMask& pred, const SegmentationMask& truth);
    void add(const ClassCounts& other);
    double dice(std::uint8_t class_id) const;
    double accuracy() const;
};

/// Per-class values are indexed by label (0 non-eddy, 1 anticyclonic, 2 cyclonic).
struct MetricReport {
    std::array<double, kNumClasses> dice{};
    double mean_dice = 0.0;
    double global_accuracy = 0.0;

    std::optional<std::array<double, kNumClasses>> dice_std;
    std::optional<double> mean_dice_std;
    std::optional<double> global_accuracy_std;
};

MetricReport metric_report(const ClassCounts& counts);
MetricReport metric_report(const SegmentationMask& pred, const SegmentationMask& truth);

}  // namespace eddynet::metrics

#endif  // EDDYNET_METRICS_HPP

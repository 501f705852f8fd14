#ifndef EDDYNET_EVALUATOR_HPP
#define EDDYNET_EVALUATOR_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "eddynet/dataset.hpp"
#include "eddynet/metrics.hpp"
#include "eddynet/model.hpp"

namespace eddynet::eval {

struct EvalProtocolConfig {
    std::size_t n_sets = 50;
    std::size_t set_size = 360;
    std::size_t patch_size = 120;
    std::uint64_t seed = 0;

    void validate() const;
};

/// pooled: one confusion tally per set. per_patch: metrics per patch, averaged over the set.
enum class Aggregation { pooled, per_patch };
std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& s);

/// Predicted masks for a run of pool items, in order.
using Predictor = std::function<std::vector<SegmentationMask>(std::span<const data::PatchPair>)>;

/// Infer-mode network, argmax per pixel.
Predictor model_predictor(const model::NetworkWeights& weights, std::size_t batch_size = 16);
/// Returns each item's own ground truth.
Predictor truth_predictor();

struct ProtocolReport {
    Aggregation aggregation = Aggregation::pooled;
    EvalProtocolConfig config;
    metrics::MetricReport summary;  // means across sets, with population standard deviations
    std::vector<metrics::MetricReport> sets;
};

/// Draws n_sets independent sets of set_size distinct pool items (seeded), scores each set and
/// summarizes across sets. Each pool item is predicted at most once.
ProtocolReport evaluate_protocol(const Predictor& predictor, std::span<const data::PatchPair> pool,
                                 const EvalProtocolConfig& config, Aggregation aggregation = Aggregation::pooled);
/// Same, with the network as predictor; patch_size must be a multiple of 2^stages.
ProtocolReport evaluate_protocol(const model::NetworkWeights& weights, std::span<const data::PatchPair> pool,
                                 const EvalProtocolConfig& config, Aggregation aggregation = Aggregation::pooled);

nlohmann::ordered_json to_json(const ProtocolReport& report);

/// Cuts n_patches seeded patches of the given size from the scenes, cycling through them.
std::vector<data::PatchPair> build_pool(std::span<const data::Scene> scenes, std::size_t n_patches,
                                        std::size_t patch_size, std::uint64_t seed);

struct GhostEddyRecord {
    std::size_t row = 0;
    std::size_t col = 0;
    Label label = kAnticyclonic;
};

/// Per-class fraction of ghost centers whose predicted label equals the recorded class.
/// A class with no records has no rate.
struct GhostRates {
    std::optional<double> anticyclonic;
    std::optional<double> cyclonic;
    std::size_t anticyclonic_count = 0;
    std::size_t cyclonic_count = 0;
};

/// One record per line: `row,col,class` with class 1 or 2. Blank and '#' lines are skipped.
std::vector<GhostEddyRecord> parse_ghosts(const std::string& text);
std::vector<GhostEddyRecord> load_ghosts(const std::filesystem::path& path);

GhostRates ghost_check(const SegmentationMask& predicted, std::span<const GhostEddyRecord> ghosts);
GhostRates ghost_check(const model::NetworkWeights& weights, const SshGrid& grid,
                       std::span<const GhostEddyRecord> ghosts);

nlohmann::ordered_json to_json(const GhostRates& rates);

/// Whole-grid inference: fill cells become 0, the grid is mirror-padded at the bottom and
/// right to a multiple of 2^stages, and the prediction is cropped back to the grid size.
SegmentationMask predict_grid(const model::NetworkWeights& weights, const SshGrid& grid);

}  // namespace eddynet::eval

#endif  // EDDYNET_EVALUATOR_HPP

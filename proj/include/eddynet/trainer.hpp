#ifndef EDDYNET_TRAINER_HPP
#define EDDYNET_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eddynet/dataset.hpp"
#include "eddynet/losses.hpp"
#include "eddynet/metrics.hpp"
#include "eddynet/model.hpp"

namespace eddynet::train {

struct TrainConfig {
    loss::LossKind loss = loss::LossKind::dice;
    model::Variant variant = model::Variant::relu_bn;
    int batch_size = 16;
    int patience = 5;
    int max_epochs = 200;
    double learning_rate = 1e-3;
    double dropout_rate = 0.2;
    std::uint64_t seed = 0;
    /// An epoch improves on the best one when val_loss < best - min_delta.
    double min_delta = 1e-6;
    double bn_momentum = nn::kBatchNormMomentum;
    /// After each epoch, replace the BN moving statistics with the average batch statistics of
    /// a dropout-free train-mode pass over the training set. Off by default. With few batches
    /// per epoch the momentum average lags the weights, and statistics gathered under dropout
    /// do not match the dropout-free inference pass.
    bool refresh_bn_stats = false;
    /// Stages, filters, upsampling kernel. Variant, dropout and input size are taken from the
    /// fields above and from the training patches.
    model::EddyNetConfig architecture;

    void validate() const;
    model::EddyNetConfig model_config(std::size_t h, std::size_t w) const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_mean_dice = 0.0;
    double seconds = 0.0;

    bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
    std::vector<EpochRecord> epochs;
    std::optional<std::size_t> best_epoch;

    bool operator==(const TrainingHistory&) const = default;
};

struct TrainResult {
    model::NetworkWeights weights;  // snapshot from the best epoch
    TrainingHistory history;
};

/// Seconds since an arbitrary origin.
using Clock = std::function<double()>;
double steady_seconds();

struct TrainHooks {
    Clock clock = steady_seconds;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch ADAM with early stopping on validation loss. The last partial batch of each
/// epoch is dropped. Throws std::invalid_argument on empty sets and std::runtime_error when a
/// batch loss is not finite.
TrainResult train(const TrainConfig& config, std::span<const data::PatchPair> train_set,
                  std::span<const data::PatchPair> val_set, const TrainHooks& hooks = {});

struct ValidationResult {
    double loss = 0.0;  // pooled over the whole set
    metrics::MetricReport report;
};

/// Infer-mode pass over the set.
ValidationResult evaluate_validation(const model::NetworkWeights& weights, std::span<const data::PatchPair> val_set,
                                     loss::LossKind loss_kind, std::size_t batch_size = 16);

inline constexpr const char* kHistoryHeader = "epoch,train_loss,val_loss,val_mean_dice,seconds";

std::string format_history_csv(const TrainingHistory& history);

struct CheckpointPaths {
    std::filesystem::path weights;
    std::filesystem::path history;
};

/// Writes `weights.edyn` and `history.csv` into `directory`, creating it if needed.
CheckpointPaths checkpoint(const model::NetworkWeights& weights, const TrainingHistory& history,
                           const std::filesystem::path& directory);

}  // namespace eddynet::train

#endif  // EDDYNET_TRAINER_HPP

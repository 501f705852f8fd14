#include "eddynet/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <array>
#include <stdexcept>

#include "eddynet/adam.hpp"
#include "eddynet/binary_io.hpp"
#include "eddynet/weights_io.hpp"

namespace eddynet::train {

void TrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (patience < 1) throw std::invalid_argument("patience must be >= 1");
    if (max_epochs < 0) throw std::invalid_argument("max_epochs must be >= 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("learning_rate must be finite and >= 0");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("dropout_rate must be in [0, 1)");
    if (!(min_delta >= 0.0)) throw std::invalid_argument("min_delta must be >= 0");
    if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw std::invalid_argument("bn_momentum must be in [0, 1]");
}

model::EddyNetConfig TrainConfig::model_config(std::size_t h, std::size_t w) const {
    model::EddyNetConfig c = architecture;
    c.variant = variant;
    c.dropout_rate = dropout_rate;
    c.input_h = static_cast<int>(h);
    c.input_w = static_cast<int>(w);
    c.validate();
    c.validate_input_size(h, w);
    return c;
}

double steady_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

namespace {

struct Streams {
    nn::Rng init, shuffle, dropout;
};

// Independent generators for weight init, epoch shuffles and dropout masks, all from one seed.
Streams make_streams(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    std::array<std::uint64_t, 3> s{};
    std::vector<std::uint32_t> words(6);
    seq.generate(words.begin(), words.end());
    for (std::size_t i = 0; i < 3; ++i) s[i] = (std::uint64_t{words[2 * i]} << 32) | words[2 * i + 1];
    return {nn::Rng(s[0]), nn::Rng(s[1]), nn::Rng(s[2])};
}

void check_set(std::span<const data::PatchPair> set, const char* what) {
    if (set.empty()) throw std::invalid_argument(std::string(what) + " set is empty");
    const auto& f = set.front();
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& p = set[i];
        if (p.ssh.rows != f.ssh.rows || p.ssh.cols != f.ssh.cols || p.mask.rows != p.ssh.rows ||
            p.mask.cols != p.ssh.cols) {
            throw ShapeError(std::string(what) + " item " + std::to_string(i) + " has a different size");
        }
        // ReLU maps NaN to 0, so a bad input would otherwise surface later as corrupt BN statistics.
        for (float v : p.ssh.values) {
            if (!std::isfinite(v))
                throw std::invalid_argument(std::string(what) + " item " + std::to_string(i) + " holds a non-finite value");
        }
    }
}

std::size_t trainable_size(const model::NetworkWeights& w) {
    std::size_t n = 0;
    for (const auto& l : w.layers) n += l.params.trainable_count();
    return n;
}

void adam_update(model::NetworkWeights& w, const model::Gradients<float>& g, nn::AdamState& state) {
    std::vector<std::span<float>> params;
    std::vector<std::span<const float>> grads;
    for (std::size_t i = 0; i < w.layers.size(); ++i) {
        auto& p = w.layers[i].params;
        if (!p.trainable) continue;
        const auto& d = g[i];
        if (!p.weights.empty()) {
            params.push_back(p.weights.span());
            grads.push_back(d.weights.span());
        }
        if (!p.bias.empty()) {
            params.push_back(p.bias);
            grads.push_back(d.bias);
        }
        if (!p.gamma.empty()) {
            params.push_back(p.gamma);
            grads.push_back(d.gamma);
        }
        if (!p.beta.empty()) {
            params.push_back(p.beta);
            grads.push_back(d.beta);
        }
    }
    nn::adam_step(params, grads, state);
}

// Population BN statistics for the current weights: per layer, the mean over full batches of
// the batch mean and of the unbiased batch variance.
void refresh_batchnorm(model::NetworkWeights& weights, std::span<const data::PatchPair> set, std::size_t batch) {
    model::NetworkWeights probe = weights;
    probe.config.dropout_rate = 0.0;
    std::vector<std::vector<double>> mean(weights.layers.size()), var(weights.layers.size());
    std::vector<std::size_t> idx(batch);
    nn::Rng unused(0);
    const std::size_t n_batches = set.size() / batch;
    for (std::size_t b = 0; b < n_batches; ++b) {
        std::iota(idx.begin(), idx.end(), b * batch);
        const auto fwd = model::forward(probe, data::make_batch(set, idx).input, nn::Mode::train, unused);
        const auto& steps = fwd.cache.program.steps;
        for (std::size_t k = 0; k < steps.size(); ++k) {
            if (steps[k].op != model::OpCode::batchnorm) continue;
            const auto layer = static_cast<std::size_t>(steps[k].layer);
            const auto& bn = fwd.cache.steps[k].bn;
            mean[layer].resize(bn.mean.size(), 0.0);
            var[layer].resize(bn.var.size(), 0.0);
            const double bessel = bn.count > 1 ? double(bn.count) / double(bn.count - 1) : 1.0;
            for (std::size_t c = 0; c < bn.mean.size(); ++c) {
                mean[layer][c] += bn.mean[c];
                var[layer][c] += bn.var[c] * bessel;
            }
        }
    }
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        auto& p = weights.layers[l].params;
        for (std::size_t c = 0; c < mean[l].size(); ++c) {
            p.moving_mean[c] = static_cast<float>(mean[l][c] / double(n_batches));
            p.moving_var[c] = static_cast<float>(var[l][c] / double(n_batches));
        }
    }
}

}  // namespace

ValidationResult evaluate_validation(const model::NetworkWeights& weights, std::span<const data::PatchPair> val_set,
                                     loss::LossKind loss_kind, std::size_t batch_size) {
    check_set(val_set, "validation");
    if (batch_size == 0) throw std::invalid_argument("evaluate_validation: batch_size must be >= 1");
    loss::LossAccumulator acc(loss_kind);
    metrics::ClassCounts counts;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < val_set.size(); start += batch_size) {
        idx.resize(std::min(batch_size, val_set.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const data::Batch b = data::make_batch(val_set, idx);
        const Tensor probs = model::predict(weights, b.input);
        acc.add(probs, b.target);
        const auto pred = data::argmax_labels(probs);
        for (std::size_t k = 0; k < idx.size(); ++k) counts.add(pred[k], val_set[idx[k]].mask);
    }
    return {acc.value(), metrics::metric_report(counts)};
}

TrainResult train(const TrainConfig& config, std::span<const data::PatchPair> train_set,
                  std::span<const data::PatchPair> val_set, const TrainHooks& hooks) {
    config.validate();
    check_set(train_set, "training");
    check_set(val_set, "validation");
    const std::size_t h = train_set.front().ssh.rows, w = train_set.front().ssh.cols;
    if (val_set.front().ssh.rows != h || val_set.front().ssh.cols != w)
        throw ShapeError("training and validation patches differ in size");
    const auto batch = static_cast<std::size_t>(config.batch_size);
    if (train_set.size() < batch) {
        throw std::invalid_argument("training set of " + std::to_string(train_set.size()) +
                                    " items holds no full batch of " + std::to_string(batch));
    }
    const Clock clock = hooks.clock ? hooks.clock : Clock(steady_seconds);

    Streams rng = make_streams(config.seed);
    TrainResult result;
    result.weights = model::build_model(config.model_config(h, w), rng.init);
    if (config.max_epochs == 0) return result;

    model::NetworkWeights current = result.weights;
    nn::AdamState adam(trainable_size(current), nn::AdamHyper{config.learning_rate});
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t n_batches = train_set.size() / batch;
    double best = INFINITY;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        const double t0 = clock();
        std::shuffle(order.begin(), order.end(), rng.shuffle);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < n_batches; ++b) {
            const std::span<const std::size_t> idx(order.data() + b * batch, batch);
            const data::Batch mb = data::make_batch(train_set, idx);
            auto fwd = model::forward(current, mb.input, nn::Mode::train, rng.dropout);
            const auto lv = loss::compute_loss(config.loss, fwd.probabilities, mb.target);
            if (!std::isfinite(lv.loss)) {
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch " + std::to_string(b));
            }
            loss_sum += lv.loss;
            const auto grads = model::backward(current, fwd.cache, lv.grad);
            adam_update(current, grads, adam);
            model::apply_batchnorm_updates(current, fwd.cache, config.bn_momentum);
        }
        if (config.refresh_bn_stats) refresh_batchnorm(current, train_set, batch);
        const ValidationResult val = evaluate_validation(current, val_set, config.loss, batch);
        EpochRecord rec{epoch, loss_sum / static_cast<double>(n_batches), val.loss, val.report.mean_dice,
                        clock() - t0};
        result.history.epochs.push_back(rec);
        if (hooks.on_epoch) hooks.on_epoch(rec);

        if (!std::isfinite(val.loss)) {
            throw std::runtime_error("training diverged: non-finite validation loss at epoch " +
                                     std::to_string(epoch));
        }
        if (val.loss < best - config.min_delta) {
            best = val.loss;
            result.history.best_epoch = result.history.epochs.size() - 1;
            result.weights = current;
        } else if (epoch - static_cast<int>(*result.history.best_epoch) >= config.patience) {
            break;
        }
    }
    return result;
}

std::string format_history_csv(const TrainingHistory& history) {
    std::string out = std::string(kHistoryHeader) + "\n";
    char line[256];
    for (const auto& e : history.epochs) {
        std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.6f\n", e.epoch, e.train_loss, e.val_loss,
                      e.val_mean_dice, e.seconds);
        out += line;
    }
    return out;
}

CheckpointPaths checkpoint(const model::NetworkWeights& weights, const TrainingHistory& history,
                           const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    CheckpointPaths paths{directory / "weights.edyn", directory / "history.csv"};
    model::save_weights(weights, paths.weights);
    const std::string csv = format_history_csv(history);
    write_file(paths.history, std::vector<std::uint8_t>(csv.begin(), csv.end()));
    return paths;
}

}  // namespace eddynet::train

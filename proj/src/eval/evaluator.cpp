#include "eddynet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace eddynet::eval {

void EvalProtocolConfig::validate() const {
    if (n_sets == 0) throw std::invalid_argument("n_sets must be >= 1");
    if (set_size == 0) throw std::invalid_argument("set_size must be >= 1");
    if (patch_size == 0) throw std::invalid_argument("patch_size must be >= 1");
}

std::string to_string(Aggregation a) { return a == Aggregation::pooled ? "pooled" : "per_patch"; }

Aggregation parse_aggregation(const std::string& s) {
    if (s == "pooled") return Aggregation::pooled;
    if (s == "per_patch" || s == "per-patch") return Aggregation::per_patch;
    throw std::invalid_argument("unknown aggregation '" + s + "' (expected pooled or per_patch)");
}

Predictor model_predictor(const model::NetworkWeights& weights, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("model_predictor: batch_size must be >= 1");
    return [&weights, batch_size](std::span<const data::PatchPair> items) {
        std::vector<SegmentationMask> out;
        out.reserve(items.size());
        std::vector<std::size_t> idx;
        for (std::size_t start = 0; start < items.size(); start += batch_size) {
            idx.resize(std::min(batch_size, items.size() - start));
            std::iota(idx.begin(), idx.end(), start);
            const auto batch = data::make_batch(items, idx);
            for (auto& m : data::argmax_labels(model::predict(weights, batch.input))) out.push_back(std::move(m));
        }
        return out;
    };
}

Predictor truth_predictor() {
    return [](std::span<const data::PatchPair> items) {
        std::vector<SegmentationMask> out;
        out.reserve(items.size());
        for (const auto& p : items) out.push_back(p.mask);
        return out;
    };
}

namespace {

struct Moments {
    std::vector<double> values;

    double mean() const { return std::accumulate(values.begin(), values.end(), 0.0) / values.size(); }
    double stddev() const {
        const double m = mean();
        double s = 0.0;
        for (double v : values) s += (v - m) * (v - m);
        return std::sqrt(s / values.size());
    }
};

metrics::MetricReport per_patch_report(std::span<const std::size_t> members,
                                       const std::vector<SegmentationMask>& predicted,
                                       std::span<const data::PatchPair> pool) {
    metrics::MetricReport r;
    for (std::size_t i : members) {
        for (std::uint8_t c = 0; c < kNumClasses; ++c) r.dice[c] += metrics::hard_dice(predicted[i], pool[i].mask, c);
        r.global_accuracy += metrics::global_accuracy(predicted[i], pool[i].mask);
    }
    const double n = static_cast<double>(members.size());
    for (auto& d : r.dice) d /= n;
    r.global_accuracy /= n;
    r.mean_dice = (r.dice[0] + r.dice[1] + r.dice[2]) / 3.0;
    return r;
}

}  // namespace

ProtocolReport evaluate_protocol(const Predictor& predictor, std::span<const data::PatchPair> pool,
                                 const EvalProtocolConfig& config, Aggregation aggregation) {
    config.validate();
    if (pool.size() < config.set_size) {
        throw std::invalid_argument("test pool of " + std::to_string(pool.size()) +
                                    " patches is smaller than set_size " + std::to_string(config.set_size));
    }
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& p = pool[i];
        if (p.ssh.rows != config.patch_size || p.ssh.cols != config.patch_size || p.mask.rows != p.ssh.rows ||
            p.mask.cols != p.ssh.cols) {
            throw ShapeError("pool item " + std::to_string(i) + " is not a " + std::to_string(config.patch_size) +
                             "x" + std::to_string(config.patch_size) + " patch pair");
        }
    }

    // Draw every set first so each needed item is predicted once, in pool order.
    data::Rng rng(config.seed);
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::vector<std::size_t>> sets(config.n_sets);
    std::vector<bool> needed(pool.size(), false);
    for (auto& s : sets) {
        s.clear();
        std::sample(all.begin(), all.end(), std::back_inserter(s), config.set_size, rng);
        for (std::size_t i : s) needed[i] = true;
    }

    std::vector<SegmentationMask> predicted(pool.size());
    std::vector<std::size_t> run;
    auto flush = [&] {
        if (run.empty()) return;
        auto masks = predictor(pool.subspan(run.front(), run.size()));
        if (masks.size() != run.size()) throw std::runtime_error("predictor returned the wrong number of masks");
        for (std::size_t k = 0; k < run.size(); ++k) {
            require_same_shape(masks[k], pool[run[k]].mask, "predicted mask vs ground truth");
            predicted[run[k]] = std::move(masks[k]);
        }
        run.clear();
    };
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (needed[i]) {
            run.push_back(i);
        } else {
            flush();
        }
    }
    flush();

    ProtocolReport report;
    report.aggregation = aggregation;
    report.config = config;
    for (const auto& s : sets) {
        if (aggregation == Aggregation::pooled) {
            metrics::ClassCounts counts;
            for (std::size_t i : s) counts.add(predicted[i], pool[i].mask);
            report.sets.push_back(metrics::metric_report(counts));
        } else {
            report.sets.push_back(per_patch_report(s, predicted, pool));
        }
    }

    std::array<Moments, kNumClasses> dice;
    Moments mean_dice, acc;
    for (const auto& r : report.sets) {
        for (std::size_t c = 0; c < kNumClasses; ++c) dice[c].values.push_back(r.dice[c]);
        mean_dice.values.push_back(r.mean_dice);
        acc.values.push_back(r.global_accuracy);
    }
    auto& sum = report.summary;
    std::array<double, kNumClasses> dice_std{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        sum.dice[c] = dice[c].mean();
        dice_std[c] = dice[c].stddev();
    }
    sum.mean_dice = (sum.dice[0] + sum.dice[1] + sum.dice[2]) / 3.0;
    sum.global_accuracy = acc.mean();
    sum.dice_std = dice_std;
    sum.mean_dice_std = mean_dice.stddev();
    sum.global_accuracy_std = acc.stddev();
    return report;
}

ProtocolReport evaluate_protocol(const model::NetworkWeights& weights, std::span<const data::PatchPair> pool,
                                 const EvalProtocolConfig& config, Aggregation aggregation) {
    weights.config.validate_input_size(config.patch_size, config.patch_size);
    return evaluate_protocol(model_predictor(weights), pool, config, aggregation);
}

nlohmann::ordered_json to_json(const ProtocolReport& report) {
    static const char* names[kNumClasses] = {"non_eddy", "anticyclonic", "cyclonic"};
    const auto& s = report.summary;
    nlohmann::ordered_json j;
    j["aggregation"] = to_string(report.aggregation);
    j["n_sets"] = report.config.n_sets;
    j["set_size"] = report.config.set_size;
    j["patch_size"] = report.config.patch_size;
    j["seed"] = report.config.seed;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        j["dice"][names[c]] = {{"mean", s.dice[c]}, {"std", s.dice_std ? (*s.dice_std)[c] : 0.0}};
    }
    j["mean_dice"] = {{"mean", s.mean_dice}, {"std", s.mean_dice_std.value_or(0.0)}};
    j["global_accuracy"] = {{"mean", s.global_accuracy}, {"std", s.global_accuracy_std.value_or(0.0)}};
    return j;
}

std::vector<data::PatchPair> build_pool(std::span<const data::Scene> scenes, std::size_t n_patches,
                                        std::size_t patch_size, std::uint64_t seed) {
    if (scenes.empty() && n_patches > 0) throw std::invalid_argument("build_pool: no scenes");
    data::Rng rng(seed);
    std::vector<data::PatchPair> pool;
    pool.reserve(n_patches);
    for (std::size_t i = 0; i < n_patches; ++i) {
        const auto& s = scenes[i % scenes.size()];
        pool.push_back(data::sample_patch(s.grid, s.mask, rng, patch_size, s.name));
    }
    return pool;
}

std::vector<GhostEddyRecord> parse_ghosts(const std::string& text) {
    std::vector<GhostEddyRecord> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        long long r = -1, c = -1, k = -1;
        char tail = 0;
        if (std::sscanf(line.c_str(), "%lld,%lld,%lld%c", &r, &c, &k, &tail) != 3 || r < 0 || c < 0 ||
            (k != kAnticyclonic && k != kCyclonic)) {
            throw std::invalid_argument("ghost line " + std::to_string(lineno) + ": expected row,col,class with class 1 or 2");
        }
        out.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), static_cast<Label>(k)});
    }
    return out;
}

std::vector<GhostEddyRecord> load_ghosts(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_ghosts(ss.str());
}

GhostRates ghost_check(const SegmentationMask& predicted, std::span<const GhostEddyRecord> ghosts) {
    std::size_t hits[kNumClasses] = {}, counts[kNumClasses] = {};
    for (const auto& g : ghosts) {
        if (g.row >= predicted.rows || g.col >= predicted.cols) {
            throw std::out_of_range("ghost center (" + std::to_string(g.row) + "," + std::to_string(g.col) +
                                    ") is outside the " + std::to_string(predicted.rows) + "x" +
                                    std::to_string(predicted.cols) + " grid");
        }
        if (g.label != kAnticyclonic && g.label != kCyclonic) throw std::invalid_argument("ghost class must be 1 or 2");
        ++counts[g.label];
        if (predicted.at(g.row, g.col) == g.label) ++hits[g.label];
    }
    GhostRates r;
    r.anticyclonic_count = counts[kAnticyclonic];
    r.cyclonic_count = counts[kCyclonic];
    if (counts[kAnticyclonic]) r.anticyclonic = double(hits[kAnticyclonic]) / double(counts[kAnticyclonic]);
    if (counts[kCyclonic]) r.cyclonic = double(hits[kCyclonic]) / double(counts[kCyclonic]);
    return r;
}

GhostRates ghost_check(const model::NetworkWeights& weights, const SshGrid& grid,
                       std::span<const GhostEddyRecord> ghosts) {
    return ghost_check(predict_grid(weights, grid), ghosts);
}

nlohmann::ordered_json to_json(const GhostRates& rates) {
    nlohmann::ordered_json j;
    j["anticyclonic"] = rates.anticyclonic ? nlohmann::ordered_json(*rates.anticyclonic) : nlohmann::ordered_json(nullptr);
    j["cyclonic"] = rates.cyclonic ? nlohmann::ordered_json(*rates.cyclonic) : nlohmann::ordered_json(nullptr);
    j["anticyclonic_count"] = rates.anticyclonic_count;
    j["cyclonic_count"] = rates.cyclonic_count;
    return j;
}

namespace {

// Index into [0, n) after reflecting about the edges without repeating them.
std::size_t reflect(std::size_t i, std::size_t n) {
    if (n == 1) return 0;
    const std::size_t period = 2 * (n - 1);
    i %= period;
    return i < n ? i : period - i;
}

}  // namespace

SegmentationMask predict_grid(const model::NetworkWeights& weights, const SshGrid& grid) {
    const std::size_t rows = grid.values.rows, cols = grid.values.cols;
    if (rows == 0 || cols == 0) throw ShapeError("predict_grid: empty grid");
    const std::size_t m = weights.config.size_multiple();
    const std::size_t ph = (rows + m - 1) / m * m, pw = (cols + m - 1) / m * m;
    const SshGrid clean = data::sanitize(grid);
    Tensor input(1, 1, ph, pw);
    for (std::size_t r = 0; r < ph; ++r)
        for (std::size_t c = 0; c < pw; ++c) input(0, 0, r, c) = clean.values.at(reflect(r, rows), reflect(c, cols));
    const SegmentationMask full = data::argmax_labels(model::predict(weights, input)).front();
    SegmentationMask out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = full.at(r, c);
    return out;
}

}  // namespace eddynet::eval

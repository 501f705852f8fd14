#ifndef EDDYNET_DATASET_HPP
#define EDDYNET_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eddynet/field.hpp"
#include "eddynet/tensor.hpp"

namespace eddynet::data {

using Rng = std::mt19937_64;

inline constexpr std::size_t kPatchSize = 128;

/// Every fill-valued cell becomes 0; all other cells are kept.
SshGrid sanitize(const SshGrid& grid);

struct Provenance {
    std::string grid_id;
    std::size_t row = 0;
    std::size_t col = 0;
};

struct PatchPair {
    Field2D<float> ssh;
    SegmentationMask mask;
    Provenance provenance;
};

/// Uniformly placed square window cut congruently from the grid and its mask. Fill values in
/// the window are replaced by 0.
PatchPair sample_patch(const SshGrid& grid, const SegmentationMask& mask, Rng& rng,
                       std::size_t patch_size = kPatchSize, const std::string& grid_id = {});

/// The whole grid as one pair, fill values replaced by 0.
PatchPair whole_grid(const SshGrid& grid, const SegmentationMask& mask, const std::string& grid_id = {});

/// (1, 3, h, w) binary tensor with one 1 per pixel.
Tensor one_hot(const SegmentationMask& mask);
/// Channel argmax per pixel (first maximum wins), one mask per batch item.
std::vector<SegmentationMask> argmax_labels(const Tensor& probabilities);

struct Batch {
    Tensor input;   // (n, 1, h, w)
    Tensor target;  // (n, 3, h, w)
};

Batch make_batch(std::span<const PatchPair> patches, std::span<const std::size_t> indices);
Tensor ssh_tensor(const Field2D<float>& ssh);

/// Seeded shuffle, then the first round(ratio * n) items go to training.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_train_val(const std::vector<T>& items, double ratio,
                                                          std::uint64_t seed) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("split ratio must be in [0, 1]");
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(items.size())));
    std::pair<std::vector<T>, std::vector<T>> out;
    out.first.reserve(n_train);
    out.second.reserve(items.size() - n_train);
    for (std::size_t i = 0; i < order.size(); ++i) (i < n_train ? out.first : out.second).push_back(items[order[i]]);
    return out;
}

/// A grid with its ground-truth mask, as stored in a data directory.
struct Scene {
    std::string name;
    SshGrid grid;
    SegmentationMask mask;
};

/// Reads `manifest.txt` (one scene name per line) from `dir`. Each scene is `<name>.sshg`
/// plus `<name>.mask`, or `<name>.contours` rasterized onto the grid when no mask exists.
std::vector<Scene> load_dataset(const std::filesystem::path& dir);

}  // namespace eddynet::data

#endif  // EDDYNET_DATASET_HPP

#include "eddynet/dataset.hpp"

#include <fstream>
#include <iostream>

#include "eddynet/grid_io.hpp"
#include "eddynet/raster.hpp"

namespace eddynet::data {

SshGrid sanitize(const SshGrid& grid) {
    SshGrid out = grid;
    for (auto& v : out.values.values) {
        if (grid.is_fill(v)) v = 0.0f;
    }
    return out;
}

PatchPair sample_patch(const SshGrid& grid, const SegmentationMask& mask, Rng& rng, std::size_t patch_size,
                       const std::string& grid_id) {
    const std::size_t rows = grid.values.rows, cols = grid.values.cols;
    if (mask.rows != rows || mask.cols != cols) {
        throw ShapeError("sample_patch: grid " + std::to_string(rows) + "x" + std::to_string(cols) + " vs mask " +
                         std::to_string(mask.rows) + "x" + std::to_string(mask.cols));
    }
    if (patch_size == 0 || rows < patch_size || cols < patch_size) {
        throw ShapeError("sample_patch: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " is smaller than the " + std::to_string(patch_size) + "x" + std::to_string(patch_size) +
                         " patch");
    }
    std::uniform_int_distribution<std::size_t> dr(0, rows - patch_size);
    std::uniform_int_distribution<std::size_t> dc(0, cols - patch_size);
    PatchPair p;
    p.provenance = {grid_id, dr(rng), dc(rng)};
    p.ssh = Field2D<float>(patch_size, patch_size);
    p.mask = SegmentationMask(patch_size, patch_size);
    for (std::size_t r = 0; r < patch_size; ++r) {
        for (std::size_t c = 0; c < patch_size; ++c) {
            const float v = grid.values.at(p.provenance.row + r, p.provenance.col + c);
            p.ssh.at(r, c) = grid.is_fill(v) ? 0.0f : v;
            p.mask.at(r, c) = mask.at(p.provenance.row + r, p.provenance.col + c);
        }
    }
    return p;
}

PatchPair whole_grid(const SshGrid& grid, const SegmentationMask& mask, const std::string& grid_id) {
    if (mask.rows != grid.values.rows || mask.cols != grid.values.cols) {
        throw ShapeError("whole_grid: grid " + std::to_string(grid.values.rows) + "x" +
                         std::to_string(grid.values.cols) + " vs mask " + std::to_string(mask.rows) + "x" +
                         std::to_string(mask.cols));
    }
    return {sanitize(grid).values, mask, {grid_id, 0, 0}};
}

Tensor one_hot(const SegmentationMask& mask) {
    mask.validate();
    Tensor t(1, kNumClasses, mask.rows, mask.cols);
    for (std::size_t i = 0; i < mask.values.size(); ++i) t.plane(0, mask.values[i])[i] = 1.0f;
    return t;
}

std::vector<SegmentationMask> argmax_labels(const Tensor& probabilities) {
    std::vector<SegmentationMask> out;
    const std::size_t plane = probabilities.shape().plane();
    if (probabilities.c() == 0) throw ShapeError("argmax_labels: no channels");
    for (std::size_t n = 0; n < probabilities.n(); ++n) {
        SegmentationMask m(probabilities.h(), probabilities.w());
        for (std::size_t i = 0; i < plane; ++i) {
            std::uint8_t best = 0;
            float best_v = probabilities.plane(n, 0)[i];
            for (std::size_t c = 1; c < probabilities.c(); ++c) {
                const float v = probabilities.plane(n, c)[i];
                if (v > best_v) {
                    best_v = v;
                    best = static_cast<std::uint8_t>(c);
                }
            }
            m.values[i] = best;
        }
        out.push_back(std::move(m));
    }
    return out;
}

Tensor ssh_tensor(const Field2D<float>& ssh) { return Tensor(Shape4{1, 1, ssh.rows, ssh.cols}, ssh.values); }

Batch make_batch(std::span<const PatchPair> patches, std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: no indices");
    const auto& first = patches[indices[0]];
    const std::size_t h = first.ssh.rows, w = first.ssh.cols, plane = h * w;
    Batch b{Tensor(indices.size(), 1, h, w), Tensor(indices.size(), kNumClasses, h, w)};
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= patches.size()) throw std::out_of_range("make_batch: index out of range");
        const auto& p = patches[indices[k]];
        if (p.ssh.rows != h || p.ssh.cols != w || p.mask.rows != h || p.mask.cols != w) {
            throw ShapeError("make_batch: patch " + std::to_string(indices[k]) + " has a different size");
        }
        std::copy_n(p.ssh.values.data(), plane, b.input.plane(k, 0));
        for (std::size_t i = 0; i < plane; ++i) {
            const std::uint8_t l = p.mask.values[i];
            if (l >= kNumClasses) throw std::invalid_argument("make_batch: label out of range");
            b.target.plane(k, l)[i] = 1.0f;
        }
    }
    return b;
}

std::vector<Scene> load_dataset(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot open " + (dir / "manifest.txt").string());
    std::vector<Scene> scenes;
    std::string name;
    while (std::getline(manifest, name)) {
        if (!name.empty() && name.back() == '\r') name.pop_back();
        if (name.empty() || name[0] == '#') continue;
        Scene s;
        s.name = name;
        s.grid = load_ssh_grid(dir / (name + ".sshg"));
        const auto mask_path = dir / (name + ".mask");
        if (std::filesystem::exists(mask_path)) {
            s.mask = load_mask(mask_path);
        } else {
            auto raster = rasterize_contours(load_contours(dir / (name + ".contours")), s.grid.geometry());
            for (const auto& w : raster.warnings) std::cerr << name << ": " << w << "\n";
            s.mask = std::move(raster.mask);
        }
        if (s.mask.rows != s.grid.values.rows || s.mask.cols != s.grid.values.cols) {
            throw ShapeError("scene " + name + ": mask and grid sizes differ");
        }
        scenes.push_back(std::move(s));
    }
    return scenes;
}

}  // namespace eddynet::data

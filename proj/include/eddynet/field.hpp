#ifndef EDDYNET_FIELD_HPP
#define EDDYNET_FIELD_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "eddynet/tensor.hpp"

namespace eddynet {

enum Label : std::uint8_t { kNonEddy = 0, kAnticyclonic = 1, kCyclonic = 2 };
inline constexpr std::size_t kNumClasses = 3;

/// Row-major 2-D field.
template <typename T>
struct Field2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> values;

    Field2D() = default;
    Field2D(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), values(r * c, fill) {}

    T& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::size_t size() const { return values.size(); }

    bool operator==(const Field2D&) const = default;
};

/// Class label per cell: 0 non-eddy / land / no data, 1 anticyclonic, 2 cyclonic.
struct SegmentationMask : Field2D<std::uint8_t> {
    using Field2D<std::uint8_t>::Field2D;

    /// Throws std::invalid_argument if any label is outside {0, 1, 2}.
    void validate() const {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] > kCyclonic) {
                throw std::invalid_argument("mask label " + std::to_string(values[i]) + " at cell " +
                                            std::to_string(i) + " is not in {0,1,2}");
            }
        }
    }
};

inline void require_same_shape(const SegmentationMask& a, const SegmentationMask& b, const char* what) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw ShapeError(std::string(what) + ": mask shapes " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " and " + std::to_string(b.rows) + "x" + std::to_string(b.cols) +
                         " differ");
    }
}

/// Cell (row, col) sits at (lat0 + row * resolution, lon0 + col * resolution).
struct GridGeometry {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double lat0 = 0.0;
    double lon0 = 0.0;
    double resolution = 0.25;

    bool operator==(const GridGeometry&) const = default;
};

struct SshGrid {
    Field2D<float> values;
    double lat0 = 0.0;
    double lon0 = 0.0;
    double resolution = 0.25;
    double fill_value = -2147483647.0;

    GridGeometry geometry() const { return {values.rows, values.cols, lat0, lon0, resolution}; }
    bool is_fill(float v) const;

    bool operator==(const SshGrid&) const = default;
};

}  // namespace eddynet

#endif  // EDDYNET_FIELD_HPP

#ifndef EDDYNET_GRID_IO_HPP
#define EDDYNET_GRID_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eddynet/binary_io.hpp"
#include "eddynet/field.hpp"

namespace eddynet::data {

inline constexpr std::uint32_t kGridFormatVersion = 1;

// Grid file: "SSHG" | u32 version | u32 rows | u32 cols | f64 lat0 lon0 resolution fill_value
//            | rows*cols f32 | u32 CRC-32 of every preceding byte
std::vector<std::uint8_t> encode_grid(const SshGrid& grid);
SshGrid decode_grid(std::span<const std::uint8_t> bytes);
void save_grid(const SshGrid& grid, const std::filesystem::path& path);
SshGrid load_ssh_grid(const std::filesystem::path& path);

// Mask file: "MASK" | u32 rows | u32 cols | rows*cols u8 labels
std::vector<std::uint8_t> encode_mask(const SegmentationMask& mask);
SegmentationMask decode_mask(std::span<const std::uint8_t> bytes);
void save_mask(const SegmentationMask& mask, const std::filesystem::path& path);
SegmentationMask load_mask(const std::filesystem::path& path);

struct EddyContour {
    Label label = kAnticyclonic;
    std::vector<std::pair<double, double>> vertices;  // (lon, lat)
};
using EddyContourSet = std::vector<EddyContour>;

/// One polygon per line: `class_id;lon1,lat1;lon2,lat2;...`. Blank lines and lines starting
/// with '#' are skipped.
EddyContourSet parse_contours(const std::string& text);
std::string format_contours(const EddyContourSet& contours);
EddyContourSet load_contours(const std::filesystem::path& path);
void save_contours(const EddyContourSet& contours, const std::filesystem::path& path);

/// Fixed palette: non-eddy blue, anticyclonic green, cyclonic brown.
inline constexpr std::uint8_t kPalette[kNumClasses][3] = {{0, 0, 255}, {0, 160, 0}, {150, 75, 0}};

/// Binary PPM (P6), mask row 0 as the top image row.
std::vector<std::uint8_t> encode_ppm(const SegmentationMask& mask);
void save_ppm(const SegmentationMask& mask, const std::filesystem::path& path);

}  // namespace eddynet::data

#endif  // EDDYNET_GRID_IO_HPP

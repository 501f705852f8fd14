#ifndef EDDYNET_WEIGHTS_IO_HPP
#define EDDYNET_WEIGHTS_IO_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "eddynet/binary_io.hpp"
#include "eddynet/model.hpp"

namespace eddynet::model {

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

// Layout (little-endian):
//   "EDYN" | u32 version | u32 variant
//   config: u32 stages, filters, input_h, input_w, classes, in_channels, upsample_kernel, bn_order; f64 dropout
//   u32 layer count
//   per layer: u32 name length | UTF-8 name | u32 kind | u32 array count
//              per array: u32 rank | rank x u32 dims | f32 data
//              (conv: weights, bias; batchnorm: gamma, beta, moving_mean, moving_var)
//   u32 CRC-32 of every preceding byte

std::vector<std::uint8_t> encode_weights(const NetworkWeights& weights);
/// Decodes and checks the layer list against the architecture named by the file header and,
/// when given, against `expected`. Failures raise FormatException with a distinct code.
NetworkWeights decode_weights(std::span<const std::uint8_t> bytes,
                              const std::optional<EddyNetConfig>& expected = std::nullopt);

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path,
                            const std::optional<EddyNetConfig>& expected = std::nullopt);

}  // namespace eddynet::model

#endif  // EDDYNET_WEIGHTS_IO_HPP

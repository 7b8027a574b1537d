#ifndef PANE_IMAGE_IO_HPP
#define PANE_IMAGE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pane/tensor.hpp"

namespace pane {

/// Binary P5 (one channel) or P6 (three channels), maxval 255, to a [C,H,W] tensor at 0-255 scale.
Tensor<double> decode_pnm(std::span<const std::uint8_t> bytes);

/// PGM/PPM from a [1,H,W] or [3,H,W] tensor; values rounded and clamped to 0-255.
std::vector<std::uint8_t> encode_pnm(const Tensor<double>& image);

/// PNM or raw tensor file (detected by magic).
Tensor<double> read_image(const std::filesystem::path& path);

enum class HeatmapStyle { gray, signed_rb };

/**
 * 8-bit rendering of an [H,W] map.
 *
 * gray: min-max normalized P5, a constant map renders as 128.
 * signed_rb: P6 with positive values in red and negative in blue, scaled by max |value|.
 */
std::vector<std::uint8_t> render_heatmap(const Tensor<double>& map, HeatmapStyle style);

void write_heatmap(const Tensor<double>& map, const std::filesystem::path& path, HeatmapStyle style);

}  // namespace pane

#endif  // PANE_IMAGE_IO_HPP

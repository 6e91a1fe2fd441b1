#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xhm/array.hpp"
#include "xhm/explain.hpp"

namespace xhm {

/// 8-bit grayscale image.
struct GrayImage {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Binary PGM ("P5", maxval 255). Throws Errc::io when the file cannot be written.
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
/// Throws Errc::io, Errc::bad_magic or Errc::truncated.
GrayImage read_pgm(const std::filesystem::path& path);

/// Upper-clips values at their 99th percentile (nearest rank), then scales
/// min..max to 0..255 with rounding. A constant map renders as all zeros.
GrayImage heatmap_image(const Heatmap& h);
void render_heatmap(const Heatmap& h, const std::filesystem::path& path);

/// Single-channel input in [0,1] to 8 bits and back (value / 255).
GrayImage input_image(const Array& x);
Array image_input(const GrayImage& image);

}  // namespace xhm

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xhm/array.hpp"

namespace xhm {

/// Images with values in [0, 1], stored back to back as [channels, rows, cols].
struct Dataset {
  std::size_t channels = 1, rows = 0, cols = 0;
  std::vector<double> pixels;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * rows * cols; }
  Shape image_shape() const { return {channels, rows, cols}; }
  Array image(std::size_t i) const;
  /// Subset in the given order.
  Dataset select(const std::vector<std::size_t>& indices) const;
};

/// Reads an IDX3 image file (magic 0x00000803) and an IDX1 label file
/// (magic 0x00000801); gzip-compressed files are read transparently.
/// Pixel bytes are scaled by 1/255. Throws Errc::bad_magic (naming the
/// expected and actual magic), Errc::count_mismatch, Errc::truncated or
/// Errc::io.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Split of a dataset directory: "<prefix>train-images..." and
/// "<prefix>test-images..." (or the t10k names), with or without ".gz".
struct DatasetSplit {
  Dataset train;
  Dataset test;
};

DatasetSplit load_idx_directory(const std::filesystem::path& dir);

}  // namespace xhm

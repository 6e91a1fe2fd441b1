#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <memory>

#include "xhm/dataset.hpp"
#include "xhm/error.hpp"

namespace xhm {

Array Dataset::image(std::size_t i) const {
  if (i >= size()) throw Error(Errc::invalid_argument, "image index " + std::to_string(i) + " out of range");
  const auto first = pixels.begin() + static_cast<std::ptrdiff_t>(i * image_size());
  return Array(image_shape(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(image_size())));
}

Dataset Dataset::select(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.channels = channels;
  out.rows = rows;
  out.cols = cols;
  for (std::size_t i : indices) {
    const Array img = image(i);
    out.pixels.insert(out.pixels.end(), img.data.begin(), img.data.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

namespace {

// gzopen reads uncompressed files unchanged, so one path covers both forms.
std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::unique_ptr<gzFile_s, int (*)(gzFile)> file(gzopen(path.string().c_str(), "rb"), gzclose);
  if (!file) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes;
  std::array<unsigned char, 1 << 16> buf;
  for (;;) {
    const int n = gzread(file.get(), buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) throw Error(Errc::io, "failed reading " + path.string());
    if (n == 0) break;
    bytes.insert(bytes.end(), buf.begin(), buf.begin() + n);
  }
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::filesystem::path& path) {
  if (at + 4 > b.size()) throw Error(Errc::truncated, path.string() + ": header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

void check_magic(std::uint32_t actual, std::uint32_t expected, const std::filesystem::path& path) {
  if (actual == expected) return;
  char msg[96];
  std::snprintf(msg, sizeof msg, ": expected magic 0x%08X, found 0x%08X", expected, actual);
  throw Error(Errc::bad_magic, path.string() + msg);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_all(images);
  const auto lab = read_all(labels);
  check_magic(be32(img, 0, images), 0x00000803u, images);
  check_magic(be32(lab, 0, labels), 0x00000801u, labels);

  const std::size_t n = be32(img, 4, images);
  Dataset d;
  d.rows = be32(img, 8, images);
  d.cols = be32(img, 12, images);
  const std::size_t n_labels = be32(lab, 4, labels);
  if (n != n_labels)
    throw Error(Errc::count_mismatch, images.string() + " has " + std::to_string(n) + " images but " +
                                          labels.string() + " has " + std::to_string(n_labels) + " labels");
  const std::size_t need = 16 + n * d.rows * d.cols;
  if (img.size() < need)
    throw Error(Errc::truncated, images.string() + ": expected " + std::to_string(need) + " bytes, found " +
                                     std::to_string(img.size()));
  if (lab.size() < 8 + n)
    throw Error(Errc::truncated, labels.string() + ": expected " + std::to_string(8 + n) + " bytes, found " +
                                     std::to_string(lab.size()));
  d.pixels.resize(need - 16);
  std::transform(img.begin() + 16, img.begin() + static_cast<std::ptrdiff_t>(need), d.pixels.begin(),
                 [](unsigned char v) { return v / 255.0; });
  d.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n));
  return d;
}

namespace {

std::filesystem::path find_file(const std::filesystem::path& dir, std::initializer_list<const char*> keys) {
  std::vector<std::filesystem::path> hits;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    for (const char* key : keys)
      if (name.find(key) != std::string::npos && (name.ends_with("ubyte") || name.ends_with("ubyte.gz")))
        hits.push_back(entry.path());
  }
  if (hits.empty()) throw Error(Errc::io, "no file matching '" + std::string(*keys.begin()) + "' in " + dir.string());
  std::sort(hits.begin(), hits.end());
  return hits.front();
}

}  // namespace

DatasetSplit load_idx_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::io, dir.string() + " is not a directory");
  DatasetSplit split;
  split.train = load_idx(find_file(dir, {"train-images"}), find_file(dir, {"train-labels"}));
  split.test = load_idx(find_file(dir, {"test-images", "t10k-images"}), find_file(dir, {"test-labels", "t10k-labels"}));
  return split;
}

}  // namespace xhm

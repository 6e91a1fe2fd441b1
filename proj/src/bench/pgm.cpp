#include "xhm/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "xhm/error.hpp"

namespace xhm {

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  if (image.pixels.size() != image.rows * image.cols)
    throw Error(Errc::invalid_argument, "pgm: pixel count does not match the image size");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << "P5\n" << image.cols << " " << image.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P5") throw Error(Errc::bad_magic, path.string() + ": expected magic P5, found \"" + magic + "\"");
  auto next_number = [&]() -> std::size_t {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      in >> std::ws;
    }
    std::size_t v = 0;
    if (!(in >> v)) throw Error(Errc::truncated, path.string() + ": incomplete PGM header");
    return v;
  };
  GrayImage img;
  img.cols = next_number();
  img.rows = next_number();
  if (next_number() != 255) throw Error(Errc::unsupported, path.string() + ": only maxval 255 is supported");
  in.get();
  img.pixels.resize(img.rows * img.cols);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error(Errc::truncated, path.string() + ": pixel data truncated");
  return img;
}

GrayImage heatmap_image(const Heatmap& h) {
  if (h.size() == 0) throw Error(Errc::invalid_argument, "cannot render an empty heatmap");
  std::vector<double> sorted = h.values;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size()) - 1e-9));
  const double clip = sorted[std::max<std::size_t>(rank, 1) - 1];
  const double lo = sorted.front();
  const double hi = std::min(sorted.back(), clip);
  GrayImage img{h.rows, h.cols, std::vector<std::uint8_t>(h.size(), 0)};
  if (!(hi > lo)) return img;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double v = (std::min(h.values[i], clip) - lo) / (hi - lo);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

void render_heatmap(const Heatmap& h, const std::filesystem::path& path) { write_pgm(heatmap_image(h), path); }

GrayImage input_image(const Array& x) {
  const Shape& s = x.shape;
  if (!(s.size() == 3 && s[0] == 1) && s.size() != 2)
    throw Error(Errc::invalid_argument, "only single-channel images can be written, got " + to_string(s));
  GrayImage img{s[s.size() - 2], s[s.size() - 1], std::vector<std::uint8_t>(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(x[i], 0.0, 1.0) * 255.0));
  return img;
}

Array image_input(const GrayImage& image) {
  Array x({1, image.rows, image.cols});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = image.pixels[i] / 255.0;
  return x;
}

}  // namespace xhm

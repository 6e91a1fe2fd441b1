#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "xhm/error.hpp"
#include "xhm/pgm.hpp"

using namespace xhm;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "xhm_pgm_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string bytes_of(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Pgm, WritesBinaryP5) {
  const GrayImage img{2, 3, {0, 1, 2, 253, 254, 255}};
  const auto path = scratch("small.pgm");
  write_pgm(img, path);
  EXPECT_EQ(bytes_of(path), std::string("P5\n3 2\n255\n") + std::string("\x00\x01\x02\xfd\xfe\xff", 6));
  EXPECT_EQ(read_pgm(path), img);
}

TEST(Pgm, ReadsHeaderComments) {
  const auto path = scratch("comment.pgm");
  std::ofstream(path, std::ios::binary) << "P5\n# made by hand\n2 1\n# max\n255\n" << std::string("\x10\x20", 2);
  const GrayImage img = read_pgm(path);
  EXPECT_EQ(img.rows, 1u);
  EXPECT_EQ(img.cols, 2u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0x10, 0x20}));
}

TEST(Pgm, ReadErrors) {
  const auto bad = scratch("bad.pgm");
  std::ofstream(bad, std::ios::binary) << "P2\n1 1\n255\n0";
  try {
    read_pgm(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_magic);
  }
  const auto short_file = scratch("short.pgm");
  std::ofstream(short_file, std::ios::binary) << "P5\n4 4\n255\n" << std::string(3, 'a');
  try {
    read_pgm(short_file);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated);
  }
  EXPECT_THROW(read_pgm(scratch("missing.pgm")), Error);
}

TEST(Pgm, UnwritablePathFails) {
  const GrayImage img{1, 1, {0}};
  try {
    write_pgm(img, scratch("no_such_dir") / "x.pgm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
  }
}

TEST(HeatmapImage, ConstantMapIsBlack) {
  const GrayImage img = heatmap_image(Heatmap(3, 3, std::vector<double>(9, 0.25)));
  EXPECT_EQ(img.pixels, std::vector<std::uint8_t>(9, 0));
}

TEST(HeatmapImage, OutlierIsClippedToThePercentile) {
  std::vector<double> v;
  for (int i = 0; i < 99; ++i) v.push_back(i);
  v.push_back(1e6);
  const GrayImage img = heatmap_image(Heatmap(10, 10, v));
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[49], 128);  // 49 / 98 of the range, rounded half up
  EXPECT_EQ(img.pixels[98], 255);
  EXPECT_EQ(img.pixels[99], 255);
}

TEST(HeatmapImage, RendersAreByteIdentical) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(28 * 28);
  for (double& x : v) x = dist(rng);
  const Heatmap h(28, 28, v);
  render_heatmap(h, scratch("a.pgm"));
  render_heatmap(h, scratch("b.pgm"));
  EXPECT_EQ(bytes_of(scratch("a.pgm")), bytes_of(scratch("b.pgm")));
  EXPECT_EQ(bytes_of(scratch("a.pgm")).size(), std::string("P5\n28 28\n255\n").size() + 784);
}

TEST(InputImage, RoundTripsEightBitValues) {
  Array x({1, 2, 2}, {0.0, 51.0 / 255.0, 128.0 / 255.0, 1.0});
  const GrayImage img = input_image(x);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 51, 128, 255}));
  Array back = image_input(img);
  EXPECT_EQ(back.data, x.data);
  EXPECT_THROW(input_image(Array({3, 2, 2}, 0.0)), Error);
}

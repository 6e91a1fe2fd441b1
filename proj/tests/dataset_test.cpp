#include <gtest/gtest.h>
#include <zlib.h>

#include <filesystem>
#include <fstream>

#include "xhm/dataset.hpp"
#include "xhm/error.hpp"

using namespace xhm;

namespace {

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

std::vector<unsigned char> image_file(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      std::uint32_t magic = 0x803) {
  std::vector<unsigned char> b;
  for (std::uint32_t v : {magic, n, rows, cols}) {
    auto w = be32(v);
    b.insert(b.end(), w.begin(), w.end());
  }
  for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<unsigned char>(i * 17 % 256));
  return b;
}

std::vector<unsigned char> label_file(std::uint32_t n) {
  std::vector<unsigned char> b = be32(0x801);
  auto w = be32(n);
  b.insert(b.end(), w.begin(), w.end());
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<unsigned char>(i % 10));
  return b;
}

class IdxTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("xhm_idx_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::filesystem::path write(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto path = dir_ / name;
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                static_cast<std::streamsize>(bytes.size()));
    return path;
  }

  std::filesystem::path write_gz(const std::string& name, const std::vector<unsigned char>& bytes) {
    const auto path = dir_ / name;
    gzFile f = gzopen(path.string().c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    return path;
  }

  std::filesystem::path dir_;
};

}  // namespace

TEST_F(IdxTest, ReadsPlainFiles) {
  const Dataset d = load_idx(write("a-images-idx3-ubyte", image_file(3, 2, 2)), write("a-labels", label_file(3)));
  ASSERT_EQ(d.size(), 3u);
  EXPECT_EQ(d.image_shape(), (Shape{1, 2, 2}));
  EXPECT_DOUBLE_EQ(d.image(1)[0], 68.0 / 255.0);
  EXPECT_EQ(d.labels[2], 2);
}

TEST_F(IdxTest, GzipMatchesPlain) {
  const Dataset plain = load_idx(write("i", image_file(5, 3, 4)), write("l", label_file(5)));
  const Dataset gz = load_idx(write_gz("i.gz", image_file(5, 3, 4)), write_gz("l.gz", label_file(5)));
  EXPECT_EQ(plain.pixels, gz.pixels);
  EXPECT_EQ(plain.labels, gz.labels);
}

TEST_F(IdxTest, BadMagicNamesBothValues) {
  try {
    load_idx(write("i", image_file(1, 2, 2, 0x801)), write("l", label_file(1)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::bad_magic);
    EXPECT_NE(std::string(e.what()).find("0x00000803"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("0x00000801"), std::string::npos);
  }
}

TEST_F(IdxTest, CountMismatch) {
  try {
    load_idx(write("i", image_file(4, 2, 2)), write("l", label_file(3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::count_mismatch);
  }
}

TEST_F(IdxTest, TruncatedBody) {
  auto bytes = image_file(4, 2, 2);
  bytes.resize(bytes.size() - 3);
  try {
    load_idx(write("i", bytes), write("l", label_file(4)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::truncated);
  }
}

TEST_F(IdxTest, MissingFile) {
  try {
    load_idx(dir_ / "nope", dir_ / "nope2");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::io);
  }
}

TEST_F(IdxTest, DirectoryLayout) {
  write_gz("train-images-idx3-ubyte.gz", image_file(6, 2, 2));
  write_gz("train-labels-idx1-ubyte.gz", label_file(6));
  write("t10k-images-idx3-ubyte", image_file(2, 2, 2));
  write("t10k-labels-idx1-ubyte", label_file(2));
  const DatasetSplit s = load_idx_directory(dir_);
  EXPECT_EQ(s.train.size(), 6u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Dataset, SelectKeepsOrder) {
  Dataset d;
  d.rows = d.cols = 1;
  d.pixels = {0.1, 0.2, 0.3};
  d.labels = {1, 2, 3};
  const Dataset s = d.select({2, 0});
  EXPECT_EQ(s.pixels, (std::vector<double>{0.3, 0.1}));
  EXPECT_EQ(s.labels, (std::vector<std::uint8_t>{3, 1}));
}

TEST(Dataset, BundledDigitsLoad) {
  const DatasetSplit s = load_idx_directory(XHM_DATA_DIR);
  EXPECT_EQ(s.train.size(), 4000u);
  EXPECT_EQ(s.test.size(), 1000u);
  EXPECT_EQ(s.train.image_shape(), (Shape{1, 28, 28}));
}

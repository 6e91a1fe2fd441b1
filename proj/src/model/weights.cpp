// Weight file layout (all multi-byte values little-endian):
//   "XHW1", u32 layer count, then per layer:
//   u8 kind tag, u8 rank, u32 dims[rank], f64 weights (row-major),
//   u32 bias flag, f64 bias[dims[0]] when the flag is 1.
// Parameterless layers are written with rank 0, no weights and flag 0.

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "xhm/error.hpp"
#include "xhm/model.hpp"

namespace xhm {
namespace {

constexpr std::array<char, 4> kMagic{'X', 'H', 'W', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  void set_context(std::string ctx) { context_ = std::move(ctx); }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    const char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }
  double f64() {
    const char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw Error(Errc::truncated, "weight file truncated" + (context_.empty() ? "" : " in " + context_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace

void save_weights(const Network& net, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  const auto& layers = net.architecture().layers;
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerParams& p = net.parameters()[i];
    w.u8(static_cast<std::uint8_t>(layers[i].kind));
    w.u8(static_cast<std::uint8_t>(p.weight.shape.size()));
    for (std::size_t d : p.weight.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.weight.data) w.f64(v);
    w.u32(p.bias.data.empty() ? 0u : 1u);
    for (double v : p.bias.data) w.f64(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

Network load_weights(const Architecture& arch, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open weight file " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  r.set_context("header");
  const char* magic = r.take(4);
  if (std::memcmp(magic, kMagic.data(), 4) != 0)
    throw Error(Errc::bad_magic, "weight file " + path.string() + ": expected magic \"XHW1\", found \"" +
                                     std::string(magic, 4) + "\"");
  const std::uint32_t count = r.u32();
  if (count != arch.layers.size())
    throw Error(Errc::spec_mismatch, "weight file has " + std::to_string(count) + " layers, architecture has " +
                                         std::to_string(arch.layers.size()));

  std::vector<LayerParams> params;
  for (std::size_t i = 0; i < count; ++i) {
    const LayerSpec& spec = arch.layers[i];
    r.set_context("layer " + std::to_string(i));
    const auto tag = r.u8();
    if (tag != static_cast<std::uint8_t>(spec.kind))
      throw Error(Errc::spec_mismatch, "layer " + std::to_string(i) + ": file kind tag " + std::to_string(tag) +
                                           ", architecture expects " + layer_name(spec.kind));
    const auto rank = r.u8();
    Shape dims(rank);
    for (auto& d : dims) d = r.u32();
    if (dims != spec.weight_shape())
      throw Error(Errc::spec_mismatch, "layer " + std::to_string(i) + ": file weight shape " + to_string(dims) +
                                           ", architecture expects " + to_string(spec.weight_shape()));
    LayerParams p;
    if (rank > 0) {
      p.weight = Array(dims);
      for (double& v : p.weight.data) v = r.f64();
    }
    const std::uint32_t has_bias = r.u32();
    if (has_bias > 1 || (has_bias && rank == 0))
      throw Error(Errc::spec_mismatch, "layer " + std::to_string(i) + ": invalid bias flag " + std::to_string(has_bias));
    if (has_bias) {
      p.bias = Array({dims[0]});
      for (double& v : p.bias.data) v = r.f64();
    }
    params.push_back(std::move(p));
  }
  if (!r.done()) throw Error(Errc::spec_mismatch, "weight file " + path.string() + " has trailing bytes");
  return Network(arch, std::move(params));
}

}  // namespace xhm

#include <algorithm>
#include <cmath>
#include <limits>

#include "tape_state.hpp"
#include "xhm/error.hpp"

namespace xhm::ad::detail {
namespace {

double stable_softplus(double x, double beta) {
  return std::max(x, 0.0) + std::log1p(std::exp(-beta * std::abs(x))) / beta;
}

double stable_sigmoid(double x, double beta) {
  const double z = beta * x;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ConvDims {
  std::size_t channels, height, width;
  std::size_t filters, kh, kw;
  std::size_t out_h, out_w, stride;
};

ConvDims conv_dims(const Shape& x, const Shape& w, std::size_t stride) {
  ConvDims d{x[0], x[1], x[2], w[0], w[2], w[3], 0, 0, stride};
  d.out_h = (d.height - d.kh) / stride + 1;
  d.out_w = (d.width - d.kw) / stride + 1;
  return d;
}

void conv_forward(const ConvDims& d, const double* x, const double* w, double* y) {
  for (std::size_t o = 0; o < d.filters; ++o)
    for (std::size_t c = 0; c < d.channels; ++c)
      for (std::size_t a = 0; a < d.kh; ++a)
        for (std::size_t b = 0; b < d.kw; ++b) {
          const double wv = w[((o * d.channels + c) * d.kh + a) * d.kw + b];
          for (std::size_t i = 0; i < d.out_h; ++i) {
            const double* xr = x + (c * d.height + i * d.stride + a) * d.width + b;
            double* yr = y + (o * d.out_h + i) * d.out_w;
            for (std::size_t j = 0; j < d.out_w; ++j) yr[j] += wv * xr[j * d.stride];
          }
        }
}

void conv_input_grad(const ConvDims& d, const double* g, const double* w, double* gx) {
  for (std::size_t o = 0; o < d.filters; ++o)
    for (std::size_t c = 0; c < d.channels; ++c)
      for (std::size_t a = 0; a < d.kh; ++a)
        for (std::size_t b = 0; b < d.kw; ++b) {
          const double wv = w[((o * d.channels + c) * d.kh + a) * d.kw + b];
          for (std::size_t i = 0; i < d.out_h; ++i) {
            double* xr = gx + (c * d.height + i * d.stride + a) * d.width + b;
            const double* gr = g + (o * d.out_h + i) * d.out_w;
            for (std::size_t j = 0; j < d.out_w; ++j) xr[j * d.stride] += wv * gr[j];
          }
        }
}

void conv_weight_grad(const ConvDims& d, const double* x, const double* g, double* gw) {
  for (std::size_t o = 0; o < d.filters; ++o)
    for (std::size_t c = 0; c < d.channels; ++c)
      for (std::size_t a = 0; a < d.kh; ++a)
        for (std::size_t b = 0; b < d.kw; ++b) {
          double acc = 0.0;
          for (std::size_t i = 0; i < d.out_h; ++i) {
            const double* xr = x + (c * d.height + i * d.stride + a) * d.width + b;
            const double* gr = g + (o * d.out_h + i) * d.out_w;
            for (std::size_t j = 0; j < d.out_w; ++j) acc += gr[j] * xr[j * d.stride];
          }
          gw[((o * d.channels + c) * d.kh + a) * d.kw + b] = acc;
        }
}

template <class F>
void unary(Node& n, const Node& a, F f) {
  n.shape = a.shape;
  n.value.resize(a.value.size());
  for (std::size_t i = 0; i < a.value.size(); ++i) n.value[i] = f(a.value[i], i);
}

template <class F>
void binary(Node& n, const Node& a, const Node& b, F f) {
  n.shape = a.shape;
  n.value.resize(a.value.size());
  for (std::size_t i = 0; i < a.value.size(); ++i) n.value[i] = f(a.value[i], b.value[i]);
}

}  // namespace

void evaluate(Node& n, const std::deque<Node>& nodes) {
  auto in = [&](std::size_t k) -> const Node& { return nodes[static_cast<std::size_t>(n.inputs[k])]; };

  switch (n.op) {
    case Op::leaf:
      return;
    case Op::add:
      return binary(n, in(0), in(1), [](double a, double b) { return a + b; });
    case Op::sub:
      return binary(n, in(0), in(1), [](double a, double b) { return a - b; });
    case Op::mul:
      return binary(n, in(0), in(1), [](double a, double b) { return a * b; });
    case Op::div:
      return binary(n, in(0), in(1), [](double a, double b) { return a / b; });
    case Op::affine:
      return unary(n, in(0), [&](double a, std::size_t) { return n.scale * a + n.shift; });
    case Op::mul_const:
      return unary(n, in(0), [&](double a, std::size_t i) { return a * n.constant[i]; });
    case Op::add_const:
      return unary(n, in(0), [&](double a, std::size_t i) { return a + n.constant[i]; });
    case Op::square:
      return unary(n, in(0), [](double a, std::size_t) { return a * a; });
    case Op::abs:
      return unary(n, in(0), [](double a, std::size_t) { return std::abs(a); });
    case Op::sqrt:
      return unary(n, in(0), [](double a, std::size_t) { return std::sqrt(std::max(a, 0.0)); });
    case Op::relu:
      return unary(n, in(0), [](double a, std::size_t) { return a > 0.0 ? a : 0.0; });
    case Op::softplus:
      return unary(n, in(0), [&](double a, std::size_t) { return stable_softplus(a, n.scale); });
    case Op::sigmoid:
      return unary(n, in(0), [&](double a, std::size_t) { return stable_sigmoid(a, n.scale); });
    case Op::sum: {
      n.shape = {};
      double acc = 0.0;
      for (double v : in(0).value) acc += v;
      n.value.assign(1, acc);
      return;
    }
    case Op::expand:
      n.shape = n.aux;
      n.value.assign(numel(n.aux), in(0).value[0]);
      return;
    case Op::reshape:
      n.shape = n.aux;
      n.value = in(0).value;
      return;
    case Op::transpose: {
      const Node& a = in(0);
      const std::size_t rows = a.shape[0], cols = a.shape[1];
      n.shape = {cols, rows};
      n.value.resize(a.value.size());
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) n.value[j * rows + i] = a.value[i * cols + j];
      return;
    }
    case Op::matmul: {
      const Node& a = in(0);
      const Node& b = in(1);
      const std::size_t rows = a.shape[0], inner = a.shape[1], cols = b.shape[1];
      n.shape = {rows, cols};
      n.value.assign(rows * cols, 0.0);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t p = 0; p < inner; ++p) {
          const double av = a.value[i * inner + p];
          const double* br = b.value.data() + p * cols;
          double* out = n.value.data() + i * cols;
          for (std::size_t j = 0; j < cols; ++j) out[j] += av * br[j];
        }
      return;
    }
    case Op::spread_channels: {
      const Node& a = in(0);
      n.shape = n.aux;
      const std::size_t inner = numel(n.aux) / a.value.size();
      n.value.resize(numel(n.aux));
      for (std::size_t c = 0; c < a.value.size(); ++c)
        std::fill_n(n.value.begin() + static_cast<std::ptrdiff_t>(c * inner), inner, a.value[c]);
      return;
    }
    case Op::per_channel_sum: {
      const Node& a = in(0);
      const std::size_t channels = a.shape[0];
      const std::size_t inner = a.value.size() / channels;
      n.shape = {channels};
      n.value.assign(channels, 0.0);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t k = 0; k < inner; ++k) n.value[c] += a.value[c * inner + k];
      return;
    }
    case Op::channel_sum: {
      const Node& a = in(0);
      n.shape.assign(a.shape.begin() + 1, a.shape.end());
      const std::size_t inner = numel(n.shape);
      n.value.assign(inner, 0.0);
      for (std::size_t c = 0; c < a.shape[0]; ++c)
        for (std::size_t k = 0; k < inner; ++k) n.value[k] += a.value[c * inner + k];
      return;
    }
    case Op::channel_repeat: {
      const Node& a = in(0);
      n.shape = n.aux;
      const std::size_t channels = n.aux[0];
      n.value.resize(channels * a.value.size());
      for (std::size_t c = 0; c < channels; ++c)
        std::copy(a.value.begin(), a.value.end(), n.value.begin() + static_cast<std::ptrdiff_t>(c * a.value.size()));
      return;
    }
    case Op::conv2d: {
      const ConvDims d = conv_dims(in(0).shape, in(1).shape, n.stride);
      n.shape = {d.filters, d.out_h, d.out_w};
      n.value.assign(numel(n.shape), 0.0);
      conv_forward(d, in(0).value.data(), in(1).value.data(), n.value.data());
      return;
    }
    case Op::conv2d_input_grad: {
      const ConvDims d = conv_dims(n.aux, in(1).shape, n.stride);
      n.shape = n.aux;
      n.value.assign(numel(n.shape), 0.0);
      conv_input_grad(d, in(0).value.data(), in(1).value.data(), n.value.data());
      return;
    }
    case Op::conv2d_weight_grad: {
      const ConvDims d = conv_dims(in(0).shape, n.aux, n.stride);
      n.shape = n.aux;
      n.value.assign(numel(n.shape), 0.0);
      conv_weight_grad(d, in(0).value.data(), in(1).value.data(), n.value.data());
      return;
    }
    case Op::max_pool: {
      const Node& a = in(0);
      const std::size_t k = n.stride, channels = a.shape[0], height = a.shape[1], width = a.shape[2];
      const std::size_t oh = height / k, ow = width / k;
      n.shape = {channels, oh, ow};
      n.value.resize(channels * oh * ow);
      n.index.resize(n.value.size());
      std::size_t out = 0;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j, ++out) {
            std::size_t best = (c * height + i * k) * width + j * k;
            for (std::size_t r = 0; r < k; ++r)
              for (std::size_t s = 0; s < k; ++s) {
                const std::size_t idx = (c * height + i * k + r) * width + j * k + s;
                if (a.value[idx] > a.value[best]) best = idx;
              }
            n.index[out] = best;
            n.value[out] = a.value[best];
          }
      return;
    }
    case Op::gather: {
      const Node& a = in(0);
      n.shape = n.aux;
      n.value.resize(n.index.size());
      for (std::size_t i = 0; i < n.index.size(); ++i) n.value[i] = a.value[n.index[i]];
      return;
    }
    case Op::scatter_add: {
      const Node& a = in(0);
      n.shape = n.aux;
      n.value.assign(numel(n.aux), 0.0);
      for (std::size_t i = 0; i < n.index.size(); ++i) n.value[n.index[i]] += a.value[i];
      return;
    }
    case Op::avg_pool: {
      const Node& a = in(0);
      const std::size_t k = n.stride, channels = a.shape[0], height = a.shape[1], width = a.shape[2];
      const std::size_t oh = height / k, ow = width / k;
      const double inv = 1.0 / static_cast<double>(k * k);
      n.shape = {channels, oh, ow};
      n.value.assign(channels * oh * ow, 0.0);
      std::size_t out = 0;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j, ++out) {
            double acc = 0.0;
            for (std::size_t r = 0; r < k; ++r)
              for (std::size_t s = 0; s < k; ++s) acc += a.value[(c * height + i * k + r) * width + j * k + s];
            n.value[out] = acc * inv;
          }
      return;
    }
    case Op::avg_unpool: {
      const Node& g = in(0);
      const std::size_t k = n.stride, height = n.aux[1], width = n.aux[2];
      const std::size_t channels = g.shape[0], oh = g.shape[1], ow = g.shape[2];
      const double inv = 1.0 / static_cast<double>(k * k);
      n.shape = n.aux;
      n.value.assign(numel(n.aux), 0.0);
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            const double v = g.value[(c * oh + i) * ow + j] * inv;
            for (std::size_t r = 0; r < k; ++r)
              for (std::size_t s = 0; s < k; ++s) n.value[(c * height + i * k + r) * width + j * k + s] = v;
          }
      return;
    }
    case Op::softmax: {
      const Node& a = in(0);
      n.shape = a.shape;
      const double top = *std::max_element(a.value.begin(), a.value.end());
      n.value.resize(a.value.size());
      double total = 0.0;
      for (std::size_t i = 0; i < a.value.size(); ++i) total += n.value[i] = std::exp(a.value[i] - top);
      for (double& v : n.value) v /= total;
      return;
    }
    case Op::cross_entropy: {
      const Node& a = in(0);
      n.shape = {};
      const double top = *std::max_element(a.value.begin(), a.value.end());
      double total = 0.0;
      for (double v : a.value) total += std::exp(v - top);
      n.value.assign(1, top + std::log(total) - a.value[n.index[0]]);
      return;
    }
  }
  throw Error(Errc::unsupported, "unsupported primitive in tape evaluation");
}

}  // namespace xhm::ad::detail

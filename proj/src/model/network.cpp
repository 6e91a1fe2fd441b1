#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include "xhm/error.hpp"
#include "xhm/model.hpp"

namespace xhm {

ActivationKind ActivationKind::softplus(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta))
    throw Error(Errc::invalid_argument, "softplus beta must be positive and finite, got " + std::to_string(beta));
  return ActivationKind(Kind::softplus, beta);
}

std::string ActivationKind::describe() const {
  if (is_relu()) return "relu";
  std::ostringstream out;
  out << "softplus(beta=" << beta_ << ")";
  return out.str();
}

ad::Tensor activate(const ad::Tensor& x, const ActivationKind& mode) {
  return mode.is_relu() ? ad::relu(x) : ad::softplus(x, mode.beta());
}

const char* layer_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv: return "conv";
    case LayerKind::max_pool: return "maxpool";
    case LayerKind::avg_pool: return "avgpool";
    case LayerKind::activation: return "activation";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in = in;
  s.out = out;
  return s;
}

LayerSpec LayerSpec::conv(std::size_t kernel_h, std::size_t kernel_w, std::size_t in, std::size_t out,
                          std::size_t stride) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.kernel_h = kernel_h;
  s.kernel_w = kernel_w;
  s.in = in;
  s.out = out;
  s.stride = stride;
  return s;
}

LayerSpec LayerSpec::max_pool(std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::max_pool;
  s.window = window;
  return s;
}

LayerSpec LayerSpec::avg_pool(std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::avg_pool;
  s.window = window;
  return s;
}

LayerSpec LayerSpec::activation() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

Shape LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::dense: return {out, in};
    case LayerKind::conv: return {out, in, kernel_h, kernel_w};
    default: return {};
  }
}

namespace {
[[noreturn]] void compose_error(std::size_t layer, const std::string& msg) {
  throw Error(Errc::spec_mismatch, "layer " + std::to_string(layer) + ": " + msg);
}
}  // namespace

std::vector<Shape> Architecture::layer_shapes() const {
  if (input.empty() || numel(input) == 0) throw Error(Errc::spec_mismatch, "input shape must be non-empty");
  std::vector<Shape> shapes;
  Shape cur = input;
  bool spatial_seen = input.size() == 3;
  std::size_t flattens = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::dense:
        if (cur.size() != 1) compose_error(i, "dense layer needs a flat input, got " + to_string(cur));
        if (spatial_seen && flattens != 1) compose_error(i, "conv nets need exactly one flatten before dense layers");
        if (l.in != cur[0] || l.out == 0)
          compose_error(i, "dense expects " + std::to_string(l.in) + " inputs, got " + to_string(cur));
        cur = {l.out};
        break;
      case LayerKind::conv:
        if (cur.size() != 3 || l.in != cur[0] || l.out == 0 || l.stride == 0 || l.kernel_h == 0 ||
            l.kernel_w == 0 || l.kernel_h > cur[1] || l.kernel_w > cur[2])
          compose_error(i, "conv layer does not fit input " + to_string(cur));
        cur = {l.out, (cur[1] - l.kernel_h) / l.stride + 1, (cur[2] - l.kernel_w) / l.stride + 1};
        break;
      case LayerKind::max_pool:
      case LayerKind::avg_pool:
        if (cur.size() != 3 || l.window == 0 || l.window > cur[1] || l.window > cur[2])
          compose_error(i, "pooling window does not fit input " + to_string(cur));
        cur = {cur[0], cur[1] / l.window, cur[2] / l.window};
        break;
      case LayerKind::activation:
        break;
      case LayerKind::flatten:
        ++flattens;
        if (flattens > 1) compose_error(i, "more than one flatten layer");
        cur = {numel(cur)};
        break;
      default:
        compose_error(i, "unsupported layer kind");
    }
    shapes.push_back(cur);
  }
  if (cur != Shape{classes})
    throw Error(Errc::spec_mismatch, "network output " + to_string(cur) + " does not match " +
                                         std::to_string(classes) + " classes");
  return shapes;
}

Architecture reference_architecture() {
  Architecture a;
  a.input = {1, 28, 28};
  a.classes = 10;
  a.layers = {LayerSpec::conv(5, 5, 1, 8), LayerSpec::activation(),     LayerSpec::max_pool(2),
              LayerSpec::conv(5, 5, 8, 16), LayerSpec::activation(),    LayerSpec::max_pool(2),
              LayerSpec::flatten(),         LayerSpec::dense(256, 10)};
  return a;
}

Network::Network(Architecture arch, std::vector<LayerParams> params, ActivationKind mode)
    : arch_(std::move(arch)), params_(std::move(params)), mode_(mode) {
  arch_.layer_shapes();
  if (params_.size() != arch_.layers.size())
    throw Error(Errc::spec_mismatch, "expected parameters for " + std::to_string(arch_.layers.size()) +
                                         " layers, got " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    const LayerParams& p = params_[i];
    if (p.weight.shape != l.weight_shape() || p.weight.data.size() != numel(p.weight.shape) * l.has_parameters())
      throw Error(Errc::spec_mismatch, "layer " + std::to_string(i) + " (" + layer_name(l.kind) + "): weight shape " +
                                           to_string(p.weight.shape) + ", expected " + to_string(l.weight_shape()));
    if (!p.bias.data.empty() && (!l.has_parameters() || p.bias.shape != Shape{l.out}))
      throw Error(Errc::spec_mismatch, "layer " + std::to_string(i) + ": bias shape " + to_string(p.bias.shape));
    require_finite(p.weight.data, "layer " + std::to_string(i) + " weight");
    require_finite(p.bias.data, "layer " + std::to_string(i) + " bias");
  }
}

Network Network::zeros(const Architecture& arch) {
  std::vector<LayerParams> params;
  for (const LayerSpec& l : arch.layers) {
    LayerParams p;
    if (l.has_parameters()) {
      p.weight = Array(l.weight_shape(), 0.0);
      p.bias = Array({l.out}, 0.0);
    }
    params.push_back(std::move(p));
  }
  return Network(arch, std::move(params));
}

Network Network::random(const Architecture& arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LayerParams> params;
  for (const LayerSpec& l : arch.layers) {
    LayerParams p;
    if (l.has_parameters()) {
      const Shape ws = l.weight_shape();
      const double fan_in = static_cast<double>(numel(ws) / ws[0]);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      p.weight = Array(ws);
      for (double& w : p.weight.data) w = dist(rng);
      p.bias = Array({l.out}, 0.0);
    }
    params.push_back(std::move(p));
  }
  return Network(arch, std::move(params));
}

BoundParams Network::bind(const ad::Tape& tape, bool trainable) const {
  ad::Tape t = tape;
  BoundParams b;
  for (const LayerParams& p : params_) {
    if (p.weight.data.empty()) {
      b.weights.emplace_back();
      b.biases.emplace_back();
      continue;
    }
    b.weights.push_back(trainable ? t.variable(p.weight) : t.constant(p.weight));
    if (p.bias.data.empty())
      b.biases.emplace_back();
    else
      b.biases.push_back(trainable ? t.variable(p.bias) : t.constant(p.bias));
  }
  return b;
}

ad::Tensor Network::forward(const ad::Tensor& x, ForwardTrace* trace) const {
  return forward(x, bind(x.tape(), false), trace);
}

ad::Tensor Network::forward(const ad::Tensor& x, const BoundParams& params, ForwardTrace* trace) const {
  if (x.shape() != arch_.input)
    throw Error(Errc::shape_mismatch,
                "network input shape " + to_string(arch_.input) + " vs given " + to_string(x.shape()));
  ad::Tensor h = x;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    const LayerSpec& l = arch_.layers[i];
    if (trace) trace->inputs.push_back(h);
    switch (l.kind) {
      case LayerKind::dense: {
        ad::Tensor z = ad::reshape(ad::matmul(params.weights[i], ad::reshape(h, {l.in, 1})), {l.out});
        h = params.biases[i].defined() ? ad::add(z, params.biases[i]) : z;
        break;
      }
      case LayerKind::conv: {
        ad::Tensor z = ad::conv2d(h, params.weights[i], l.stride);
        h = params.biases[i].defined() ? ad::add_bias(z, params.biases[i]) : z;
        break;
      }
      case LayerKind::max_pool: h = ad::max_pool(h, l.window); break;
      case LayerKind::avg_pool: h = ad::avg_pool(h, l.window); break;
      case LayerKind::activation: h = activate(h, mode_); break;
      case LayerKind::flatten: h = ad::reshape(h, {h.numel()}); break;
    }
    if (trace) trace->outputs.push_back(h);
  }
  return h;
}

Array predict(const Network& net, const Array& x) {
  ad::Tape tape;
  return net.forward(tape.constant(x)).array();
}

std::size_t predict_class(const Network& net, const Array& x) {
  const Array logits = predict(net, x);
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += predict_class(net, data.image(i)) == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Network set_activation_mode(const Network& net, ActivationKind mode) {
  return Network(net.architecture(), net.parameters(), mode);
}

std::uint64_t parameter_checksum(const Network& net) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::vector<double>& data) {
    for (double v : data) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  };
  for (const LayerParams& p : net.parameters()) {
    mix(p.weight.data);
    mix(p.bias.data);
  }
  return h;
}

}  // namespace xhm

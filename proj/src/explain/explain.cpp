#include "xhm/explain.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "xhm/error.hpp"

namespace xhm {

Heatmap::Heatmap(std::size_t rows_, std::size_t cols_, std::vector<double> values_, bool normalized_)
    : rows(rows_), cols(cols_), values(std::move(values_)), normalized(normalized_) {
  if (values.size() != rows * cols)
    throw Error(Errc::shape_mismatch, "heatmap of " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                                          std::to_string(values.size()) + " values");
}

double Heatmap::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

const char* method_code(Method method) {
  switch (method) {
    case Method::saliency: return "SM";
    case Method::guided_backprop: return "GB";
    case Method::integrated_gradients: return "IG";
    case Method::smoothgrad: return "SG";
    case Method::lrp: return "LRP";
  }
  return "?";
}

Method parse_method(const std::string& code) {
  std::string up = code;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Method m : {Method::saliency, Method::guided_backprop, Method::integrated_gradients, Method::smoothgrad,
                   Method::lrp})
    if (up == method_code(m)) return m;
  throw Error(Errc::config, "unknown explanation method '" + code + "' (expected SM, GB, IG, SG or LRP)");
}

void ExplainerSpec::validate() const {
  if (steps == 0) throw Error(Errc::invalid_argument, "integrated gradients needs at least one step");
  if (samples == 0) throw Error(Errc::invalid_argument, "smoothgrad needs at least one sample");
  if (!(sigma >= 0.0)) throw Error(Errc::invalid_argument, "smoothgrad sigma must be >= 0");
  if (!(epsilon >= 0.0)) throw Error(Errc::invalid_argument, "lrp epsilon must be >= 0");
}

std::string ExplainerSpec::describe() const {
  std::ostringstream out;
  out << method_code(method);
  switch (method) {
    case Method::integrated_gradients: out << "(steps=" << steps << ")"; break;
    case Method::smoothgrad: out << "(sigma=" << sigma << ",n=" << samples << ",seed=" << seed << ")"; break;
    case Method::lrp: out << "(eps=" << epsilon << ")"; break;
    default: break;
  }
  return out.str();
}

namespace {

ad::Tensor reduce_channels(const ad::Tensor& g) {
  const Shape& s = g.shape();
  if (s.size() == 1) return ad::reshape(g, {1, s[0]});
  if (s.size() != 3) throw Error(Errc::shape_mismatch, "cannot reduce map of shape " + to_string(s));
  if (s[0] == 1) return ad::reshape(g, {s[1], s[2]});
  return ad::channel_sum(ad::abs(g));
}

ad::Tensor accumulate(const std::vector<ad::Tensor>& terms) {
  ad::Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

// Gradient of logit `cls` at each point, from a single backward sweep.
std::vector<ad::Tensor> class_gradients(const Network& net, const BoundParams& params,
                                        const std::vector<ad::Tensor>& points, std::size_t cls,
                                        const ad::GradOptions& options) {
  std::vector<ad::Tensor> logits;
  for (const ad::Tensor& p : points) logits.push_back(ad::select(net.forward(p, params), cls));
  return ad::grad(accumulate(logits), points, options);
}

ad::Tensor mean_of(const std::vector<ad::Tensor>& terms) {
  if (terms.size() == 1) return terms.front();
  return ad::affine(accumulate(terms), 1.0 / static_cast<double>(terms.size()), 0.0);
}

std::vector<double> stabilizer(std::span<const double> z, double epsilon) {
  std::vector<double> off(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (epsilon == 0.0)
      off[i] = z[i] == 0.0 ? 1.0 : 0.0;
    else
      off[i] = z[i] >= 0.0 ? epsilon : -epsilon;
  }
  return off;
}

// z sigmoid(beta z) / softplus(z): turns relevance at a Softplus output into
// relevance at its input so that the next stabilized division sees
// sigmoid(beta z) z / (z + eps), which tends to the ReLU rule as beta grows.
// The tiny offset keeps the ratio finite where softplus underflows.
ad::Tensor softplus_relevance_gate(const ad::Tensor& z, double beta) {
  const ad::Tensor denom = ad::add_const(ad::softplus(z, beta), std::vector<double>(z.numel(), 1e-100));
  return ad::div(ad::mul(z, ad::sigmoid(z, beta)), denom);
}

ad::Tensor lrp_tensor(const Network& net, const BoundParams& params, const ad::Tensor& x, std::size_t cls,
                      double epsilon) {
  ForwardTrace trace;
  const ad::Tensor logits = net.forward(x, params, &trace);
  std::vector<double> onehot(logits.numel(), 0.0);
  onehot[cls] = 1.0;
  ad::Tensor r = ad::mul_const(logits, onehot);
  const auto& layers = net.architecture().layers;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const LayerSpec& l = layers[i];
    const ad::Tensor& a = trace.inputs[i];
    const ad::Tensor& z = trace.outputs[i];
    switch (l.kind) {
      case LayerKind::dense: {
        const ad::Tensor s = ad::div(r, ad::add_const(z, stabilizer(z.data(), epsilon)));
        const ad::Tensor c =
            ad::reshape(ad::matmul(ad::transpose(params.weights[i]), ad::reshape(s, {l.out, 1})), {l.in});
        r = ad::mul(a, c);
        break;
      }
      case LayerKind::conv: {
        const ad::Tensor s = ad::div(r, ad::add_const(z, stabilizer(z.data(), epsilon)));
        r = ad::mul(a, ad::conv2d_input_grad(s, params.weights[i], l.stride, a.shape()));
        break;
      }
      case LayerKind::max_pool: r = ad::scatter_add(r, ad::max_pool_argmax(z), a.shape()); break;
      case LayerKind::avg_pool: r = ad::avg_unpool(r, l.window, a.shape()); break;
      case LayerKind::activation:
        if (!net.activation().is_relu()) r = ad::mul(r, softplus_relevance_gate(a, net.activation().beta()));
        break;
      case LayerKind::flatten: r = ad::reshape(r, a.shape()); break;
      default: throw Error(Errc::unsupported, "lrp: unsupported layer kind at layer " + std::to_string(i));
    }
  }
  return r;
}

}  // namespace

ad::Tensor explain_tensor(const Network& net, const ad::Tensor& x, std::size_t cls, const ExplainerSpec& spec,
                          bool create_graph) {
  spec.validate();
  if (cls >= net.classes())
    throw Error(Errc::invalid_argument,
                "class " + std::to_string(cls) + " out of range for " + std::to_string(net.classes()) + " classes");
  if (x.shape() != net.input_shape())
    throw Error(Errc::shape_mismatch,
                "network input shape " + to_string(net.input_shape()) + " vs given " + to_string(x.shape()));
  const BoundParams params = net.bind(x.tape(), false);
  ad::GradOptions options;
  options.create_graph = create_graph;

  switch (spec.method) {
    case Method::guided_backprop:
      options.guided = true;
      [[fallthrough]];
    case Method::saliency:
      return reduce_channels(class_gradients(net, params, {x}, cls, options).front());

    case Method::integrated_gradients: {
      Array baseline = spec.baseline.data.empty() ? Array(x.shape(), 0.0) : spec.baseline;
      if (baseline.shape != x.shape())
        throw Error(Errc::shape_mismatch,
                    "baseline shape " + to_string(baseline.shape) + " vs input " + to_string(x.shape()));
      std::vector<ad::Tensor> points;
      for (std::size_t k = 0; k < spec.steps; ++k) {
        const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(spec.steps);
        std::vector<double> offset(baseline.data);
        for (double& v : offset) v *= 1.0 - alpha;
        points.push_back(ad::add_const(ad::affine(x, alpha, 0.0), std::move(offset)));
      }
      const ad::Tensor avg = mean_of(class_gradients(net, params, points, cls, options));
      std::vector<double> minus_baseline(baseline.data);
      for (double& v : minus_baseline) v = -v;
      return reduce_channels(ad::mul(avg, ad::add_const(x, std::move(minus_baseline))));
    }

    case Method::smoothgrad: {
      if (spec.sigma == 0.0) return reduce_channels(class_gradients(net, params, {x}, cls, options).front());
      std::mt19937_64 rng(spec.seed);
      std::normal_distribution<double> noise(0.0, spec.sigma);
      std::vector<ad::Tensor> points;
      for (std::size_t k = 0; k < spec.samples; ++k) {
        std::vector<double> xi(x.numel());
        for (double& v : xi) v = noise(rng);
        points.push_back(ad::add_const(x, std::move(xi)));
      }
      return reduce_channels(mean_of(class_gradients(net, params, points, cls, options)));
    }

    case Method::lrp:
      return reduce_channels(lrp_tensor(net, params, x, cls, spec.epsilon));
  }
  throw Error(Errc::unsupported, "unknown explanation method");
}

ad::Tensor normalize_tensor(const ad::Tensor& h) {
  const ad::Tensor magnitude = ad::abs(h);
  const ad::Tensor total = ad::sum(magnitude);
  if (!(total.item() > 0.0)) throw Error(Errc::degenerate_explanation, "degenerate explanation: all-zero map");
  return ad::div(magnitude, ad::expand(total, h.shape()));
}

Heatmap to_heatmap(const ad::Tensor& map, bool normalized) {
  const Shape& s = map.shape();
  if (s.size() != 2) throw Error(Errc::shape_mismatch, "heatmap tensor must be 2-D, got " + to_string(s));
  return Heatmap(s[0], s[1], std::vector<double>(map.data().begin(), map.data().end()), normalized);
}

Heatmap explain(const Network& net, const Array& x, std::size_t cls, const ExplainerSpec& spec) {
  ad::Tape tape;
  return to_heatmap(explain_tensor(net, tape.variable(x), cls, spec, false), false);
}

Heatmap saliency(const Network& net, const Array& x, std::size_t cls) {
  return explain(net, x, cls, ExplainerSpec::of(Method::saliency));
}

Heatmap guided_backprop(const Network& net, const Array& x, std::size_t cls) {
  return explain(net, x, cls, ExplainerSpec::of(Method::guided_backprop));
}

Heatmap integrated_gradients(const Network& net, const Array& x, std::size_t cls, const Array& baseline,
                             std::size_t steps) {
  ExplainerSpec spec = ExplainerSpec::of(Method::integrated_gradients);
  spec.baseline = baseline;
  spec.steps = steps;
  return explain(net, x, cls, spec);
}

Heatmap smoothgrad(const Network& net, const Array& x, std::size_t cls, double sigma, std::size_t samples,
                   std::uint64_t seed) {
  ExplainerSpec spec = ExplainerSpec::of(Method::smoothgrad);
  spec.sigma = sigma;
  spec.samples = samples;
  spec.seed = seed;
  return explain(net, x, cls, spec);
}

Heatmap lrp(const Network& net, const Array& x, std::size_t cls, double epsilon) {
  ExplainerSpec spec = ExplainerSpec::of(Method::lrp);
  spec.epsilon = epsilon;
  return explain(net, x, cls, spec);
}

Heatmap normalize(const Heatmap& h) {
  double total = 0.0;
  for (double v : h.values) total += std::abs(v);
  if (!(total > 0.0)) throw Error(Errc::degenerate_explanation, "degenerate explanation: all-zero map");
  Heatmap out(h.rows, h.cols, h.values, true);
  for (double& v : out.values) v = std::abs(v) / total;
  return out;
}

}  // namespace xhm

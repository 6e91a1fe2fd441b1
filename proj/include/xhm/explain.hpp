#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xhm/array.hpp"
#include "xhm/autodiff.hpp"
#include "xhm/model.hpp"

namespace xhm {

/// Per-pixel relevance over the spatial grid of an input, row-major.
/// Flat inputs of n features give a 1 x n map.
struct Heatmap {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
  bool normalized = false;

  Heatmap() = default;
  Heatmap(std::size_t rows, std::size_t cols, std::vector<double> values, bool normalized = false);

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double sum() const;

  friend bool operator==(const Heatmap&, const Heatmap&) = default;
};

enum class Method : std::uint8_t { saliency, guided_backprop, integrated_gradients, smoothgrad, lrp };

/// "SM", "GB", "IG", "SG", "LRP".
const char* method_code(Method method);
/// Accepts the codes above (case-insensitive). Throws Errc::config otherwise.
Method parse_method(const std::string& code);

struct ExplainerSpec {
  Method method = Method::saliency;
  Array baseline;          // integrated gradients; empty means the all-zero image
  std::size_t steps = 32;  // integrated gradients
  double sigma = 0.1;      // smoothgrad
  std::size_t samples = 32;
  std::uint64_t seed = 0;
  double epsilon = 1e-6;  // lrp

  static ExplainerSpec of(Method method) {
    ExplainerSpec s;
    s.method = method;
    return s;
  }
  /// Throws Errc::invalid_argument for steps = 0, samples = 0, sigma < 0 or epsilon < 0.
  void validate() const;
  std::string describe() const;

  friend bool operator==(const ExplainerSpec&, const ExplainerSpec&) = default;
};

/// Raw explanation of class `cls` at input `x` as a [rows, cols] tensor on
/// x's tape. `x` must require gradients for the gradient-based methods.
/// With `create_graph` the map stays differentiable with respect to `x`
/// (the network must then use Softplus activations for SM, GB, IG and SG).
ad::Tensor explain_tensor(const Network& net, const ad::Tensor& x, std::size_t cls, const ExplainerSpec& spec,
                          bool create_graph);

/// |h| / sum|h| on the tape. Throws Errc::degenerate_explanation for an all-zero map.
ad::Tensor normalize_tensor(const ad::Tensor& h);

Heatmap explain(const Network& net, const Array& x, std::size_t cls, const ExplainerSpec& spec);

Heatmap saliency(const Network& net, const Array& x, std::size_t cls);
Heatmap guided_backprop(const Network& net, const Array& x, std::size_t cls);
/// Empty `baseline` means the all-zero image. Midpoint Riemann sum over `steps` points.
Heatmap integrated_gradients(const Network& net, const Array& x, std::size_t cls, const Array& baseline,
                             std::size_t steps);
Heatmap smoothgrad(const Network& net, const Array& x, std::size_t cls, double sigma, std::size_t samples,
                   std::uint64_t seed);
Heatmap lrp(const Network& net, const Array& x, std::size_t cls, double epsilon = 1e-6);

/// |h| / sum|h|. Throws Errc::degenerate_explanation when h is all zero.
Heatmap normalize(const Heatmap& h);

Heatmap to_heatmap(const ad::Tensor& map, bool normalized);

}  // namespace xhm

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xhm/aggregate.hpp"
#include "xhm/explain.hpp"
#include "xhm/metrics.hpp"
#include "xhm/model.hpp"

namespace xhm {

/// A single explanation method or an ensemble of them; the attacked map is
/// always the normalized one.
struct Explainer {
  std::vector<ExplainerSpec> members;
  std::optional<AggregationKind> aggregation;  // set for ensembles

  static Explainer single(ExplainerSpec spec);
  static Explainer ensemble(const EnsembleSpec& spec);

  bool is_ensemble() const { return aggregation.has_value(); }
  /// "SM", "LRP", "AGG-Mean", ...
  std::string name() const;
  std::string describe() const;
  void validate() const;
};

/// Normalized explanation on x's tape; see explain_tensor for `create_graph`.
ad::Tensor explanation_tensor(const Network& net, const ad::Tensor& x, std::size_t cls, const Explainer& explainer,
                              bool create_graph);
/// Normalized explanation evaluated with the network's own activation mode.
Heatmap explanation(const Network& net, const Array& x, std::size_t cls, const Explainer& explainer);

/// Inclusive pixel rectangle.
struct Region {
  std::size_t row_begin = 0, row_end = 0, col_begin = 0, col_end = 0;

  bool contains(std::size_t r, std::size_t c) const {
    return r >= row_begin && r <= row_end && c >= col_begin && c <= col_end;
  }
  std::size_t area() const { return (row_end - row_begin + 1) * (col_end - col_begin + 1); }
  friend bool operator==(const Region&, const Region&) = default;
};

/// Centered square of side rows/2 (a quarter of the image): rows/cols 7..20 for 28x28.
Region centered_square(std::size_t rows, std::size_t cols);
/// Total of h inside the region.
double region_relevance(const Heatmap& h, const Region& region);

enum class Optimizer : std::uint8_t { gradient_descent, adam };

const char* optimizer_name(Optimizer optimizer);  // "gd" / "adam"
/// Throws Errc::config for anything but "gd" or "adam".
Optimizer parse_optimizer(const std::string& name);

struct AttackConfig {
  double eta = 1e-3;
  /// Plain steps x' -= eta * g, or Adam (0.9, 0.999, 1e-8) with step size eta.
  Optimizer optimizer = Optimizer::gradient_descent;
  std::size_t iterations = 1500;
  /// Weight of the input-distance term; unset means balanced once at the start
  /// so that the distance term equals the explanation term when every pixel
  /// has moved by 0.1.
  std::optional<double> gamma;
  double beta_start = 10.0;
  double beta_end = 100.0;
  double clamp_low = 0.0;
  double clamp_high = 1.0;
  /// Reseeds stochastic explainers (SmoothGrad) at every iteration.
  std::uint64_t seed = 0;

  /// Throws Errc::invalid_argument unless eta > 0, gamma >= 0,
  /// 0 < beta_start <= beta_end and clamp_low < clamp_high.
  void validate() const;
  /// Softplus sharpness used at `iteration`: exponential from beta_start to beta_end.
  double beta_at(std::size_t iteration) const;
};

struct AttackResult {
  Array adversarial;
  std::size_t label = 0;  // predicted class of the original input
  bool label_preserved = true;
  double image_mse = 0.0;
  double gamma = 0.0;  // weight actually used
  std::vector<double> loss_trace;
  std::vector<double> beta_trace;
  Heatmap start_explanation;  // ReLU mode, at the original input
  Heatmap final_explanation;  // ReLU mode, at the adversarial input
  // Blank-square runs only.
  double region_before = 0.0;
  double region_after = 0.0;
  double preserved_ratio = 1.0;
};

/// Gradient descent on |norm(E(x')) - target|^2 + gamma |x' - x|^2 with the
/// network in Softplus mode, clamping after every step. Errors raised during
/// the optimization name the iteration.
AttackResult attack_target(const Network& net, const Array& x, const Explainer& explainer, const Heatmap& target,
                           const AttackConfig& config);

/// Same loop with the in-region relevance of the explanation as objective.
/// Defaults to the centered square.
AttackResult attack_blank_square(const Network& net, const Array& x, const Explainer& explainer,
                                 const AttackConfig& config, std::optional<Region> region = std::nullopt);

struct TransferResult {
  AttackResult attack;
  SampleRecord attacked;   // metrics under the attacked method
  SampleRecord evaluated;  // metrics under the other method
};

/// Metrics of an attack's input under `evaluated`: its map of the target image
/// (at the class predicted for it) against its maps of x and of the
/// adversarial input (at the class of x).
SampleRecord score_attack(const Network& net, const Array& x, const Array& target_image, const AttackResult& attack,
                          const Explainer& evaluated, double k = 0.10);

/// Attacks `attacked` towards its explanation of `target_image` and scores the
/// adversarial input under both explainers. Target maps use the class
/// predicted for `target_image`; all other maps use the class of `x`.
TransferResult attack_transfer(const Network& net, const Array& x, const Explainer& attacked,
                               const Explainer& evaluated, const Array& target_image, const AttackConfig& config,
                               double k = 0.10);

}  // namespace xhm

#include "xhm/attack.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "xhm/error.hpp"

namespace xhm {

Explainer Explainer::single(ExplainerSpec spec) { return Explainer{{std::move(spec)}, std::nullopt}; }

Explainer Explainer::ensemble(const EnsembleSpec& spec) { return Explainer{spec.members, spec.kind}; }

std::string Explainer::name() const {
  return is_ensemble() ? aggregation_name(*aggregation) : method_code(members.front().method);
}

std::string Explainer::describe() const {
  return is_ensemble() ? EnsembleSpec{members, *aggregation}.describe() : members.front().describe();
}

void Explainer::validate() const {
  if (is_ensemble())
    EnsembleSpec{members, *aggregation}.validate();
  else if (members.size() != 1)
    throw Error(Errc::invalid_argument, "a single explainer needs exactly one method");
  else
    members.front().validate();
}

ad::Tensor explanation_tensor(const Network& net, const ad::Tensor& x, std::size_t cls, const Explainer& explainer,
                              bool create_graph) {
  explainer.validate();
  std::vector<ad::Tensor> maps;
  for (const ExplainerSpec& m : explainer.members)
    maps.push_back(normalize_tensor(explain_tensor(net, x, cls, m, create_graph)));
  return explainer.is_ensemble() ? aggregate_tensor(*explainer.aggregation, maps) : maps.front();
}

Heatmap explanation(const Network& net, const Array& x, std::size_t cls, const Explainer& explainer) {
  explainer.validate();
  std::vector<Heatmap> maps;
  for (const ExplainerSpec& m : explainer.members) maps.push_back(normalize(explain(net, x, cls, m)));
  return explainer.is_ensemble() ? aggregate(*explainer.aggregation, maps) : maps.front();
}

Region centered_square(std::size_t rows, std::size_t cols) {
  if (rows < 2 || cols < 2) throw Error(Errc::invalid_argument, "image too small for a centered square");
  const std::size_t side_r = rows / 2, side_c = cols / 2;
  const std::size_t r0 = (rows - side_r) / 2, c0 = (cols - side_c) / 2;
  return Region{r0, r0 + side_r - 1, c0, c0 + side_c - 1};
}

double region_relevance(const Heatmap& h, const Region& region) {
  if (region.row_end >= h.rows || region.col_end >= h.cols || region.row_begin > region.row_end ||
      region.col_begin > region.col_end)
    throw Error(Errc::invalid_argument, "region outside the heatmap");
  double total = 0.0;
  for (std::size_t r = region.row_begin; r <= region.row_end; ++r)
    for (std::size_t c = region.col_begin; c <= region.col_end; ++c) total += h.values[r * h.cols + c];
  return total;
}

const char* optimizer_name(Optimizer optimizer) {
  return optimizer == Optimizer::adam ? "adam" : "gd";
}

Optimizer parse_optimizer(const std::string& name) {
  if (name == "gd") return Optimizer::gradient_descent;
  if (name == "adam") return Optimizer::adam;
  throw Error(Errc::config, "unknown optimizer '" + name + "' (expected gd or adam)");
}

void AttackConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw Error(Errc::invalid_argument, "attack step size must be positive");
  if (gamma && !(*gamma >= 0.0)) throw Error(Errc::invalid_argument, "attack gamma must be >= 0");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !std::isfinite(beta_end))
    throw Error(Errc::invalid_argument, "beta schedule needs 0 < beta_start <= beta_end");
  if (!(clamp_low < clamp_high)) throw Error(Errc::invalid_argument, "clamp range is empty");
}

double AttackConfig::beta_at(std::size_t iteration) const {
  if (iterations <= 1) return beta_start;
  const double progress = static_cast<double>(iteration) / static_cast<double>(iterations - 1);
  return beta_start * std::pow(beta_end / beta_start, progress);
}

namespace {

using Objective = std::function<ad::Tensor(const ad::Tensor& map)>;

std::uint64_t splitmix(std::uint64_t v) {
  v += 0x9e3779b97f4a7c15ull;
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
  return v ^ (v >> 31);
}

Explainer for_iteration(const Explainer& explainer, std::uint64_t seed, std::size_t iteration) {
  Explainer out = explainer;
  for (ExplainerSpec& m : out.members)
    if (m.method == Method::smoothgrad) m.seed = splitmix(m.seed ^ splitmix(seed ^ splitmix(iteration)));
  return out;
}

[[noreturn]] void rethrow_at(const Error& e, std::size_t iteration) {
  throw Error(e.code(), "attack iteration " + std::to_string(iteration) + ": " + e.what());
}

struct LossTerms {
  ad::Tensor objective;
  ad::Tensor total;
};

// Explanation term plus gamma-weighted distance to the original input.
LossTerms attack_loss(const Network& smooth, const ad::Tensor& xv, const Array& x, std::size_t label,
                      const Explainer& explainer, const Objective& objective, double gamma) {
  const ad::Tensor map = explanation_tensor(smooth, xv, label, explainer, true);
  std::vector<double> minus_x(x.data);
  for (double& v : minus_x) v = -v;
  const ad::Tensor distance = ad::sum(ad::square(ad::add_const(xv, std::move(minus_x))));
  const ad::Tensor obj = objective(map);
  return {obj, ad::add(obj, ad::affine(distance, gamma, 0.0))};
}

AttackResult run_attack(const Network& net, const Array& x, const Explainer& explainer, const Objective& objective,
                        const AttackConfig& config) {
  config.validate();
  explainer.validate();
  if (x.shape != net.input_shape())
    throw Error(Errc::shape_mismatch,
                "network input shape " + to_string(net.input_shape()) + " vs given " + to_string(x.shape));
  for (double v : x.data)
    if (v < config.clamp_low || v > config.clamp_high)
      throw Error(Errc::invalid_argument, "attack input lies outside the clamp range");

  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  AttackResult result;
  result.label = predict_class(relu_net, x);
  result.start_explanation = explanation(relu_net, x, result.label, explainer);

  if (config.gamma) {
    result.gamma = *config.gamma;
  } else {
    const Network smooth = set_activation_mode(net, ActivationKind::softplus(config.beta_at(0)));
    ad::Tape tape;
    const ad::Tensor xv = tape.variable(x);
    const double initial = objective(explanation_tensor(smooth, xv, result.label, explainer, false)).item();
    result.gamma = initial / (static_cast<double>(x.size()) * 0.01);
  }

  Array current = x;
  std::vector<double> first(x.size(), 0.0), second(x.size(), 0.0);
  for (std::size_t t = 0; t < config.iterations; ++t) {
    const double beta = config.beta_at(t);
    try {
      const Network smooth = set_activation_mode(net, ActivationKind::softplus(beta));
      ad::Tape tape;
      const ad::Tensor xv = tape.variable(current);
      const LossTerms loss = attack_loss(smooth, xv, x, result.label, for_iteration(explainer, config.seed, t),
                                         objective, result.gamma);
      if (!std::isfinite(loss.total.item())) throw Error(Errc::non_finite, "non-finite attack loss");
      const ad::Tensor g = ad::grad(loss.objective, xv);
      const auto step = g.data();
      for (double v : step)
        if (!std::isfinite(v)) throw Error(Errc::non_finite, "non-finite attack gradient");
      // Explicit step on the explanation term, exact proximal step on the
      // distance term: (v + 2 lr gamma x) / (1 + 2 lr gamma).
      const double n = static_cast<double>(t + 1);
      const double fix1 = 1.0 - std::pow(0.9, n), fix2 = 1.0 - std::pow(0.999, n);
      for (std::size_t i = 0; i < current.size(); ++i) {
        double lr = config.eta, move = config.eta * step[i];
        if (config.optimizer == Optimizer::adam) {
          first[i] = 0.9 * first[i] + 0.1 * step[i];
          second[i] = 0.999 * second[i] + 0.001 * step[i] * step[i];
          lr = config.eta / (std::sqrt(second[i] / fix2) + 1e-8);
          move = lr * first[i] / fix1;
        }
        const double pull = 2.0 * lr * result.gamma;
        current[i] = std::clamp((current[i] - move + pull * x[i]) / (1.0 + pull), config.clamp_low, config.clamp_high);
      }
      result.loss_trace.push_back(loss.total.item());
      result.beta_trace.push_back(beta);
    } catch (const Error& e) {
      rethrow_at(e, t);
    }
  }

  result.adversarial = current;
  result.image_mse = image_mse(x, current);
  result.label_preserved = predict_class(relu_net, current) == result.label;
  try {
    result.final_explanation = explanation(relu_net, current, result.label, explainer);
  } catch (const Error& e) {
    throw Error(e.code(), std::string("explanation of the adversarial input: ") + e.what());
  }
  return result;
}

}  // namespace

AttackResult attack_target(const Network& net, const Array& x, const Explainer& explainer, const Heatmap& target,
                           const AttackConfig& config) {
  if (!target.normalized) throw Error(Errc::invalid_argument, "attack target map must be normalized");
  const Shape& in = net.input_shape();
  const std::size_t rows = in.size() == 3 ? in[1] : 1, cols = in.size() == 3 ? in[2] : in[0];
  if (target.rows != rows || target.cols != cols)
    throw Error(Errc::shape_mismatch, "attack target map does not match the input's spatial shape");
  const Array target_values({rows, cols}, target.values);
  const Objective objective = [&](const ad::Tensor& map) {
    return ad::sum(ad::square(ad::sub(map, map.tape().constant(target_values))));
  };
  return run_attack(net, x, explainer, objective, config);
}

AttackResult attack_blank_square(const Network& net, const Array& x, const Explainer& explainer,
                                 const AttackConfig& config, std::optional<Region> region) {
  const Shape& in = net.input_shape();
  if (in.size() != 3) throw Error(Errc::invalid_argument, "blank-square attack needs image inputs");
  const std::size_t rows = in[1], cols = in[2];
  const Region square = region.value_or(centered_square(rows, cols));
  if (square.row_end >= rows || square.col_end >= cols)
    throw Error(Errc::invalid_argument, "blank-square region outside the image");
  std::vector<double> mask(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) mask[r * cols + c] = square.contains(r, c) ? 1.0 : 0.0;
  const Objective objective = [&](const ad::Tensor& map) { return ad::sum(ad::mul_const(map, mask)); };

  AttackResult result = run_attack(net, x, explainer, objective, config);
  result.region_before = region_relevance(result.start_explanation, square);
  result.region_after = region_relevance(result.final_explanation, square);
  result.preserved_ratio = result.region_before > 0.0 ? result.region_after / result.region_before
                                                      : (result.region_after > 0.0 ? INFINITY : 1.0);
  return result;
}

SampleRecord score_attack(const Network& net, const Array& x, const Array& target_image, const AttackResult& attack,
                          const Explainer& evaluated, double k) {
  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  const Heatmap target = explanation(relu_net, target_image, predict_class(relu_net, target_image), evaluated);
  const Heatmap start = explanation(relu_net, x, attack.label, evaluated);
  const Heatmap adv = explanation(relu_net, attack.adversarial, attack.label, evaluated);
  SampleRecord r = compare_explanations(target, start, adv, k);
  r.image_mse = attack.image_mse;
  r.label_preserved = attack.label_preserved;
  return r;
}

TransferResult attack_transfer(const Network& net, const Array& x, const Explainer& attacked,
                               const Explainer& evaluated, const Array& target_image, const AttackConfig& config,
                               double k) {
  evaluated.validate();
  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  const Heatmap target = explanation(relu_net, target_image, predict_class(relu_net, target_image), attacked);
  TransferResult out;
  out.attack = attack_target(net, x, attacked, target, config);
  out.attacked = score_attack(net, x, target_image, out.attack, attacked, k);
  out.evaluated = score_attack(net, x, target_image, out.attack, evaluated, k);
  return out;
}

}  // namespace xhm

#pragma once

#include <span>
#include <string>
#include <vector>

#include "xhm/autodiff.hpp"
#include "xhm/explain.hpp"

namespace xhm {

enum class AggregationKind : std::uint8_t { mean, var };

const char* aggregation_name(AggregationKind kind);  // "AGG-Mean" / "AGG-Var"
/// Accepts "mean" or "var" (also the AGG- forms, case-insensitive). Throws Errc::config.
AggregationKind parse_aggregation(const std::string& name);

struct EnsembleSpec {
  std::vector<ExplainerSpec> members;
  AggregationKind kind = AggregationKind::mean;

  /// Throws Errc::invalid_argument unless there are at least two distinct, valid members.
  void validate() const;
  std::string describe() const;
};

/// Elementwise mean of normalized maps. Throws Errc::invalid_argument for
/// fewer than two maps or an unnormalized map, Errc::shape_mismatch for mixed shapes.
Heatmap agg_mean(std::span<const Heatmap> maps);
/// mean / (std + c) with c = 10 * mean pixel std (population std over members),
/// renormalized. Throws Errc::degenerate_ensemble when all members agree.
Heatmap agg_var(std::span<const Heatmap> maps);
Heatmap aggregate(AggregationKind kind, std::span<const Heatmap> maps);

/// The same aggregations on normalized map tensors, differentiable.
ad::Tensor aggregate_tensor(AggregationKind kind, std::span<const ad::Tensor> maps);

/// Normalized ensemble explanation of `x`.
Heatmap explain_ensemble(const Network& net, const Array& x, std::size_t cls, const EnsembleSpec& ensemble);

struct BiasVarianceReport {
  std::vector<double> method_mse;  // per method, averaged over samples and pixels
  double mean_mse = 0.0;           // average of method_mse
  double aggregate_mse = 0.0;      // error of the per-sample method mean
  double variance = 0.0;           // spread of the methods around their mean
};

/// `truth[n]` is the reference map of sample n, `maps[j][n]` the map of
/// method j for sample n. mean_mse == aggregate_mse + variance.
/// Throws Errc::invalid_argument for empty inputs, Errc::shape_mismatch otherwise.
BiasVarianceReport bias_variance_report(const std::vector<Heatmap>& truth,
                                        const std::vector<std::vector<Heatmap>>& maps);

}  // namespace xhm

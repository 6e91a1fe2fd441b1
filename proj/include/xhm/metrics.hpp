#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xhm/array.hpp"
#include "xhm/explain.hpp"

namespace xhm {

/// All heatmap metrics throw Errc::shape_mismatch for maps of different shape.
double mse(const Heatmap& a, const Heatmap& b);
/// Throws Errc::undefined_correlation when either map is constant.
double pcc(const Heatmap& a, const Heatmap& b);
/// Number of pixels selected at fraction k: ceil(k * size), at least 1.
std::size_t topk_count(double k, std::size_t size);
/// Indices of the topk_count(k) largest values, ties to the lowest index, ascending by rank.
std::vector<std::size_t> topk_indices(const Heatmap& h, double k);
/// |top(a) ∩ top(b)| / topk_count(k). Throws Errc::invalid_argument unless 0 < k <= 1.
double topk_intersection(const Heatmap& a, const Heatmap& b, double k = 0.10);

using SimilarityMetric = std::function<double(const Heatmap&, const Heatmap&)>;

/// m(target, adv) - m(target, start).
double relative_metric(const SimilarityMetric& m, const Heatmap& target, const Heatmap& start, const Heatmap& adv);

struct AnnotationMask {
  Heatmap weights;
  std::string source;
};

/// sum(A*E) / (|A| |E|). Throws Errc::invalid_argument for a zero-norm input.
double cosine_vs_annotation(const AnnotationMask& mask, const Heatmap& e);
/// Mean squared difference of two inputs. Throws Errc::shape_mismatch.
double image_mse(const Array& x, const Array& y);

struct SampleRecord {
  double mse = 0, pcc = 0, topk = 0;
  double delta_mse = 0, delta_pcc = 0, delta_topk = 0;
  double image_mse = 0;
  bool label_preserved = true;
};

struct FieldSummary {
  double mean = 0.0;
  double standard_error = 0.0;  // sample std / sqrt(n); 0 for n < 2
};

FieldSummary summarize(const std::vector<double>& values);

/// Per-sample metrics of an attacked explanation against its target.
/// `start` is the explanation before the attack, `adv` after.
SampleRecord compare_explanations(const Heatmap& target, const Heatmap& start, const Heatmap& adv, double k = 0.10);

struct MetricReport {
  std::vector<SampleRecord> samples;

  /// Summary of one field over the samples; with `preserved_only`, samples
  /// whose label flipped are left out.
  FieldSummary field(double SampleRecord::*member, bool preserved_only = true) const;
  std::size_t preserved_count() const;
};

}  // namespace xhm

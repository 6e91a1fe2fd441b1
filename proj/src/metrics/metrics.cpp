#include "xhm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xhm/error.hpp"

namespace xhm {

namespace {

void same_shape(const Heatmap& a, const Heatmap& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols || a.size() != b.size())
    throw Error(Errc::shape_mismatch, std::string(what) + ": maps of " + std::to_string(a.rows) + "x" +
                                          std::to_string(a.cols) + " and " + std::to_string(b.rows) + "x" +
                                          std::to_string(b.cols));
}

}  // namespace

double mse(const Heatmap& a, const Heatmap& b) {
  same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double pcc(const Heatmap& a, const Heatmap& b) {
  same_shape(a, b, "pcc");
  const double n = static_cast<double>(a.size());
  const double ma = a.sum() / n, mb = b.sum() / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::undefined_correlation, "undefined correlation: constant map");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::size_t topk_count(double k, std::size_t size) {
  if (!(k > 0.0) || k > 1.0) throw Error(Errc::invalid_argument, "top-k fraction must be in (0, 1]");
  // The small slack keeps products such as 0.3 * 10 from rounding up.
  const auto count = static_cast<std::size_t>(std::ceil(k * static_cast<double>(size) - 1e-9));
  return std::clamp<std::size_t>(count, 1, size);
}

std::vector<std::size_t> topk_indices(const Heatmap& h, double k) {
  std::vector<std::size_t> idx(h.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t count = topk_count(k, h.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t i, std::size_t j) { return h[i] > h[j] || (h[i] == h[j] && i < j); });
  idx.resize(count);
  return idx;
}

double topk_intersection(const Heatmap& a, const Heatmap& b, double k) {
  same_shape(a, b, "topk_intersection");
  std::vector<std::size_t> ta = topk_indices(a, k), tb = topk_indices(b, k);
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<std::size_t> both;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(ta.size());
}

double relative_metric(const SimilarityMetric& m, const Heatmap& target, const Heatmap& start, const Heatmap& adv) {
  same_shape(target, start, "relative_metric");
  same_shape(target, adv, "relative_metric");
  return m(target, adv) - m(target, start);
}

double cosine_vs_annotation(const AnnotationMask& mask, const Heatmap& e) {
  same_shape(mask.weights, e, "cosine_vs_annotation");
  double dot = 0.0, na = 0.0, ne = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    dot += mask.weights[i] * e[i];
    na += mask.weights[i] * mask.weights[i];
    ne += e[i] * e[i];
  }
  if (!(na > 0.0) || !(ne > 0.0)) throw Error(Errc::invalid_argument, "cosine similarity of a zero-norm map");
  return dot / (std::sqrt(na) * std::sqrt(ne));
}

double image_mse(const Array& x, const Array& y) {
  if (x.shape != y.shape)
    throw Error(Errc::shape_mismatch, "image_mse: shape mismatch " + to_string(x.shape) + " vs " + to_string(y.shape));
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return s / static_cast<double>(x.size());
}

FieldSummary summarize(const std::vector<double>& values) {
  FieldSummary s;
  if (values.empty()) return {NAN, NAN};
  const double n = static_cast<double>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.standard_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  return s;
}

SampleRecord compare_explanations(const Heatmap& target, const Heatmap& start, const Heatmap& adv, double k) {
  SampleRecord r;
  r.mse = mse(target, adv);
  r.pcc = pcc(target, adv);
  r.topk = topk_intersection(target, adv, k);
  r.delta_mse = r.mse - mse(target, start);
  r.delta_pcc = r.pcc - pcc(target, start);
  r.delta_topk = r.topk - topk_intersection(target, start, k);
  return r;
}

FieldSummary MetricReport::field(double SampleRecord::*member, bool preserved_only) const {
  std::vector<double> values;
  for (const SampleRecord& s : samples)
    if (!preserved_only || s.label_preserved) values.push_back(s.*member);
  return summarize(values);
}

std::size_t MetricReport::preserved_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const SampleRecord& s) { return s.label_preserved; }));
}

}  // namespace xhm

#include "xhm/aggregate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "xhm/error.hpp"

namespace xhm {

const char* aggregation_name(AggregationKind kind) {
  return kind == AggregationKind::mean ? "AGG-Mean" : "AGG-Var";
}

AggregationKind parse_aggregation(const std::string& name) {
  std::string low = name;
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
  if (low == "mean" || low == "agg-mean") return AggregationKind::mean;
  if (low == "var" || low == "agg-var") return AggregationKind::var;
  throw Error(Errc::config, "unknown aggregation '" + name + "' (expected mean or var)");
}

void EnsembleSpec::validate() const {
  if (members.size() < 2) throw Error(Errc::invalid_argument, "an ensemble needs at least two members");
  for (std::size_t i = 0; i < members.size(); ++i) {
    members[i].validate();
    for (std::size_t j = 0; j < i; ++j)
      if (members[i] == members[j])
        throw Error(Errc::invalid_argument, "ensemble member " + members[i].describe() + " appears twice");
  }
}

std::string EnsembleSpec::describe() const {
  std::string out = aggregation_name(kind);
  out += "(";
  for (std::size_t i = 0; i < members.size(); ++i) out += (i ? "+" : "") + members[i].describe();
  return out + ")";
}

namespace {

void check_members(std::span<const Heatmap> maps) {
  if (maps.size() < 2) throw Error(Errc::invalid_argument, "aggregation needs at least two maps");
  for (const Heatmap& h : maps) {
    if (h.rows != maps[0].rows || h.cols != maps[0].cols)
      throw Error(Errc::shape_mismatch, "aggregation: maps of different shape");
    bool ok = h.normalized && std::abs(h.sum() - 1.0) <= 1e-9;
    for (double v : h.values) ok = ok && v >= 0.0;
    if (!ok) throw Error(Errc::invalid_argument, "aggregation: member map is not normalized");
  }
}

// Running mean: exact when every member holds the same value.
std::vector<double> pixel_mean(std::span<const Heatmap> maps) {
  std::vector<double> mean(maps[0].values);
  for (std::size_t j = 1; j < maps.size(); ++j)
    for (std::size_t i = 0; i < mean.size(); ++i)
      mean[i] += (maps[j].values[i] - mean[i]) / static_cast<double>(j + 1);
  return mean;
}

}  // namespace

Heatmap agg_mean(std::span<const Heatmap> maps) {
  check_members(maps);
  return Heatmap(maps[0].rows, maps[0].cols, pixel_mean(maps), true);
}

Heatmap agg_var(std::span<const Heatmap> maps) {
  check_members(maps);
  const std::vector<double> mean = pixel_mean(maps);
  std::vector<double> sd(mean.size(), 0.0);
  for (const Heatmap& h : maps)
    for (std::size_t i = 0; i < sd.size(); ++i) sd[i] += (h.values[i] - mean[i]) * (h.values[i] - mean[i]);
  double sd_total = 0.0;
  for (double& v : sd) {
    v = std::sqrt(v / static_cast<double>(maps.size()));
    sd_total += v;
  }
  const double c = 10.0 * sd_total / static_cast<double>(sd.size());
  if (!(c > 0.0)) throw Error(Errc::degenerate_ensemble, "degenerate ensemble: all member maps are identical");
  std::vector<double> out(mean.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += out[i] = mean[i] / (sd[i] + c);
  for (double& v : out) v /= total;
  return Heatmap(maps[0].rows, maps[0].cols, std::move(out), true);
}

Heatmap aggregate(AggregationKind kind, std::span<const Heatmap> maps) {
  return kind == AggregationKind::mean ? agg_mean(maps) : agg_var(maps);
}

ad::Tensor aggregate_tensor(AggregationKind kind, std::span<const ad::Tensor> maps) {
  if (maps.size() < 2) throw Error(Errc::invalid_argument, "aggregation needs at least two maps");
  const double inv_j = 1.0 / static_cast<double>(maps.size());
  ad::Tensor total = maps[0];
  for (std::size_t j = 1; j < maps.size(); ++j) total = ad::add(total, maps[j]);
  const ad::Tensor mean = ad::affine(total, inv_j, 0.0);
  if (kind == AggregationKind::mean) return mean;

  ad::Tensor spread = ad::square(ad::sub(maps[0], mean));
  for (std::size_t j = 1; j < maps.size(); ++j) spread = ad::add(spread, ad::square(ad::sub(maps[j], mean)));
  const ad::Tensor sd = ad::sqrt(ad::affine(spread, inv_j, 0.0));
  const ad::Tensor c = ad::affine(ad::sum(sd), 10.0 / static_cast<double>(sd.numel()), 0.0);
  if (!(c.item() > 0.0)) throw Error(Errc::degenerate_ensemble, "degenerate ensemble: all member maps are identical");
  const ad::Tensor raw = ad::div(mean, ad::add(sd, ad::expand(c, sd.shape())));
  return ad::div(raw, ad::expand(ad::sum(raw), raw.shape()));
}

Heatmap explain_ensemble(const Network& net, const Array& x, std::size_t cls, const EnsembleSpec& ensemble) {
  ensemble.validate();
  std::vector<Heatmap> maps;
  for (const ExplainerSpec& m : ensemble.members) maps.push_back(normalize(explain(net, x, cls, m)));
  return aggregate(ensemble.kind, maps);
}

BiasVarianceReport bias_variance_report(const std::vector<Heatmap>& truth,
                                        const std::vector<std::vector<Heatmap>>& maps) {
  if (truth.empty() || maps.empty()) throw Error(Errc::invalid_argument, "bias-variance report needs data");
  const std::size_t n_samples = truth.size(), n_methods = maps.size();
  for (const auto& method : maps) {
    if (method.size() != n_samples)
      throw Error(Errc::shape_mismatch, "every method needs one map per reference sample");
    for (std::size_t n = 0; n < n_samples; ++n)
      if (method[n].rows != truth[n].rows || method[n].cols != truth[n].cols)
        throw Error(Errc::shape_mismatch, "method map shape differs from its reference");
  }

  BiasVarianceReport r;
  r.method_mse.assign(n_methods, 0.0);
  double cells = 0.0;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const std::size_t pixels = truth[n].size();
    cells += static_cast<double>(pixels);
    for (std::size_t p = 0; p < pixels; ++p) {
      double avg = maps[0][n].values[p];
      for (std::size_t j = 1; j < n_methods; ++j) avg += (maps[j][n].values[p] - avg) / static_cast<double>(j + 1);
      const double bias = avg - truth[n].values[p];
      r.aggregate_mse += bias * bias;
      for (std::size_t j = 0; j < n_methods; ++j) {
        const double err = maps[j][n].values[p] - truth[n].values[p];
        const double dev = maps[j][n].values[p] - avg;
        r.method_mse[j] += err * err;
        r.variance += dev * dev / static_cast<double>(n_methods);
      }
    }
  }
  for (double& v : r.method_mse) v /= cells;
  r.aggregate_mse /= cells;
  r.variance /= cells;
  for (double v : r.method_mse) r.mean_mse += v;
  r.mean_mse /= static_cast<double>(n_methods);
  return r;
}

}  // namespace xhm

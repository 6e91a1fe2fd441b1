#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "xhm/error.hpp"
#include "xhm/metrics.hpp"

using namespace xhm;

namespace {

Heatmap row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Heatmap(1, n, std::move(v));
}

Heatmap grid(std::size_t m, std::mt19937_64& rng, bool nonnegative = false) {
  std::uniform_real_distribution<double> d(nonnegative ? 0.0 : -1.0, 1.0);
  std::vector<double> v(m * m);
  for (double& x : v) x = d(rng);
  return Heatmap(m, m, v);
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io;
}

}  // namespace

TEST(Mse, Examples) {
  EXPECT_EQ(mse(row({1, 2}), row({1, 2})), 0.0);
  EXPECT_EQ(mse(row({0, 0}), row({1, 1})), 1.0);
  EXPECT_EQ(code_of([] { mse(row({1, 2}), row({1, 2, 3})); }), Errc::shape_mismatch);
}

TEST(Pcc, Examples) {
  EXPECT_DOUBLE_EQ(pcc(row({1, 5, 2}), row({1, 5, 2})), 1.0);
  EXPECT_DOUBLE_EQ(pcc(row({1, 2, 3}), row({3, 2, 1})), -1.0);
  EXPECT_EQ(pcc(row({1, 0, 0, 1}), row({0, 1, 0, 1})), 0.0);
  EXPECT_EQ(code_of([] { pcc(row({2, 2, 2}), row({1, 2, 3})); }), Errc::undefined_correlation);
}

TEST(Pcc, SymmetricAndAffineInvariant) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const Heatmap a = grid(5, rng), b = grid(5, rng);
    Heatmap scaled = a;
    for (double& v : scaled.values) v = 3.5 * v + 2.0;
    EXPECT_NEAR(pcc(a, b), pcc(b, a), 1e-15);
    EXPECT_NEAR(pcc(scaled, b), pcc(a, b), 1e-14);
  }
}

TEST(TopK, Examples) {
  const Heatmap a(2, 2, {4, 3, 2, 1}), b(2, 2, {4, 1, 2, 3});
  EXPECT_EQ(topk_intersection(a, b, 0.5), 0.5);
  EXPECT_EQ(topk_intersection(a, a), 1.0);
  EXPECT_EQ(topk_intersection(row({1, 0, 0, 0}), row({0, 0, 0, 1}), 0.25), 0.0);
}

TEST(TopK, CountAndTies) {
  EXPECT_EQ(topk_count(0.10, 784), 79u);
  EXPECT_EQ(topk_count(0.3, 10), 3u);
  EXPECT_EQ(topk_count(1e-6, 4), 1u);
  EXPECT_EQ(topk_indices(row({1, 2, 2, 2}), 0.5), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(code_of([] { topk_count(0.0, 4); }), Errc::invalid_argument);
  EXPECT_EQ(code_of([] { topk_count(1.5, 4); }), Errc::invalid_argument);
}

TEST(TopK, SymmetricAndMonotoneInK) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const Heatmap a = grid(4, rng), b = grid(4, rng);
    EXPECT_EQ(topk_intersection(a, b, 0.25), topk_intersection(b, a, 0.25));
    std::size_t previous = 0;
    for (int count = 1; count <= 16; ++count) {
      const auto ta = topk_indices(a, count / 16.0), tb = topk_indices(b, count / 16.0);
      std::size_t common = 0;
      for (auto i : ta) common += std::count(tb.begin(), tb.end(), i);
      EXPECT_GE(common, previous);
      previous = common;
    }
  }
}

TEST(Relative, Examples) {
  const Heatmap target = row({0.1, 0.9}), start = row({0.6, 0.4});
  EXPECT_EQ(relative_metric(mse, target, start, start), 0.0);
  EXPECT_EQ(relative_metric(mse, target, start, target), -mse(target, start));
  EXPECT_EQ(relative_metric(pcc, target, start, start), 0.0);
}

TEST(Cosine, Examples) {
  const AnnotationMask mask{row({1, 2, 0}), "test"};
  EXPECT_NEAR(cosine_vs_annotation(mask, row({0.5, 1.0, 0.0})), 1.0, 1e-15);
  EXPECT_EQ(cosine_vs_annotation(mask, row({0, 0, 1})), 0.0);
  EXPECT_EQ(code_of([&] { cosine_vs_annotation(mask, row({0, 0, 0})); }), Errc::invalid_argument);
}

TEST(ImageMse, Examples) {
  const Array x({1, 2, 2}, 0.25);
  Array y = x;
  EXPECT_EQ(image_mse(x, y), 0.0);
  y[3] += 0.5;
  EXPECT_EQ(image_mse(x, y), 0.0625);
  EXPECT_EQ(code_of([&] { image_mse(x, Array({4})); }), Errc::shape_mismatch);
}

TEST(Summary, MeanAndStandardError) {
  const FieldSummary s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.standard_error, std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(summarize({7.0}).standard_error, 0.0);
}

TEST(Report, FlippedSamplesExcluded) {
  MetricReport r;
  r.samples.resize(3);
  r.samples[0].delta_pcc = 1.0;
  r.samples[1].delta_pcc = 3.0;
  r.samples[2].delta_pcc = 100.0;
  r.samples[2].label_preserved = false;
  EXPECT_EQ(r.field(&SampleRecord::delta_pcc).mean, 2.0);
  EXPECT_EQ(r.field(&SampleRecord::delta_pcc, false).mean, 104.0 / 3.0);
  EXPECT_EQ(r.preserved_count(), 2u);
}

TEST(Compare, UnattackedGivesZeroDeltas) {
  std::mt19937_64 rng(3);
  const Heatmap t = grid(6, rng), s = grid(6, rng);
  const SampleRecord r = compare_explanations(t, s, s);
  EXPECT_EQ(r.delta_mse, 0.0);
  EXPECT_EQ(r.delta_pcc, 0.0);
  EXPECT_EQ(r.delta_topk, 0.0);
}

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "xhm/aggregate.hpp"
#include "xhm/error.hpp"

using namespace xhm;

namespace {

Heatmap normalized(std::vector<double> v) {
  const std::size_t n = v.size();
  return normalize(Heatmap(1, n, std::move(v)));
}

Heatmap random_normalized(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<double> d(0.0, 1.0);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = d(rng);
  return normalize(Heatmap(rows, cols, v));
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

TEST(AggMean, IdenticalMapsGiveThatMap) {
  const Heatmap h = normalized({1, 2, 3, 4});
  const std::vector<Heatmap> maps(3, h);
  EXPECT_EQ(agg_mean(maps).values, h.values);
}

TEST(AggMean, TwoOneHotMaps) {
  const std::vector<Heatmap> maps{normalized({1, 0}), normalized({0, 1})};
  EXPECT_EQ(agg_mean(maps).values, (std::vector<double>{0.5, 0.5}));
}

TEST(AggMean, ConvexHullAndSum) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Heatmap> maps;
    for (int j = 0; j < 3; ++j) maps.push_back(random_normalized(rng, 4, 5));
    const Heatmap m = agg_mean(maps);
    EXPECT_NEAR(m.sum(), 1.0, 1e-12);
    EXPECT_TRUE(m.normalized);
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(m[i], std::min({maps[0][i], maps[1][i], maps[2][i]}));
      EXPECT_LE(m[i], std::max({maps[0][i], maps[1][i], maps[2][i]}));
    }
    std::vector<Heatmap> permuted{maps[2], maps[0], maps[1]};
    const Heatmap p = agg_mean(permuted);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_NEAR(p[i], m[i], 1e-16);
  }
}

TEST(AggMean, RejectsBadInput) {
  const std::vector<Heatmap> one{normalized({1, 1})};
  EXPECT_EQ(code_of([&] { agg_mean(one); }), Errc::invalid_argument);
  const std::vector<Heatmap> raw{normalized({1, 1}), Heatmap(1, 2, {0.5, 0.5})};
  EXPECT_EQ(code_of([&] { agg_mean(raw); }), Errc::invalid_argument);
  const std::vector<Heatmap> mixed{normalized({1, 1}), normalized({1, 1, 1})};
  EXPECT_EQ(code_of([&] { agg_mean(mixed); }), Errc::shape_mismatch);
}

TEST(AggVar, IdenticalMapsAreDegenerate) {
  const std::vector<Heatmap> maps(2, normalized({1, 3}));
  EXPECT_EQ(code_of([&] { agg_var(maps); }), Errc::degenerate_ensemble);
}

TEST(AggVar, TwoOneHotMaps) {
  const std::vector<Heatmap> maps{normalized({1, 0}), normalized({0, 1})};
  const Heatmap h = agg_var(maps);
  EXPECT_EQ(h.values, (std::vector<double>{0.5, 0.5}));
}

TEST(AggVar, AgreeingPixelGainsShare) {
  // pixel 0: both members 0.4; pixel 1: 0.6 vs 0.0; pixel 2: 0.0 vs 0.6
  const std::vector<Heatmap> maps{normalized({0.4, 0.6, 0.0}), normalized({0.4, 0.0, 0.6})};
  EXPECT_GT(agg_var(maps)[0], agg_mean(maps)[0]);
}

TEST(AggVar, MatchesDirectFormula) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Heatmap> maps;
    for (int j = 0; j < 4; ++j) maps.push_back(random_normalized(rng, 3, 3));
    std::vector<double> raw(9);
    double c = 0.0;
    std::vector<double> sd(9);
    for (int i = 0; i < 9; ++i) {
      double m = 0.0;
      for (const auto& h : maps) m += h[i] / 4.0;
      double v = 0.0;
      for (const auto& h : maps) v += (h[i] - m) * (h[i] - m) / 4.0;
      sd[i] = std::sqrt(v);
      raw[i] = m;
      c += 10.0 * sd[i] / 9.0;
    }
    double total = 0.0;
    for (int i = 0; i < 9; ++i) total += raw[i] /= sd[i] + c;
    const Heatmap h = agg_var(maps);
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(h[i], raw[i] / total, 1e-14);
  }
}

TEST(AggregateTensor, MatchesValueLevel) {
  std::mt19937_64 rng(3);
  std::vector<Heatmap> maps;
  for (int j = 0; j < 3; ++j) maps.push_back(random_normalized(rng, 4, 4));
  for (AggregationKind kind : {AggregationKind::mean, AggregationKind::var}) {
    ad::Tape tape;
    std::vector<ad::Tensor> ts;
    for (const Heatmap& h : maps) ts.push_back(tape.variable(Array({4, 4}, h.values)));
    const ad::Tensor t = aggregate_tensor(kind, ts);
    const Heatmap v = aggregate(kind, maps);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(t.data()[i], v[i], 1e-15);
  }
}

TEST(AggregateTensor, VarGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  const Array a = xhm::testing::random_array({3, 3}, rng, 0.1, 1.0);
  const Array b = xhm::testing::random_array({3, 3}, rng, 0.1, 1.0);
  const Array w = xhm::testing::random_array({3, 3}, rng);
  auto f = [&](const Array& x) {
    ad::Tape tape;
    std::vector<ad::Tensor> ts{tape.variable(x), tape.constant(a), tape.constant(b)};
    return ad::sum(ad::mul(aggregate_tensor(AggregationKind::var, ts), tape.constant(w)));
  };
  const Array x0 = xhm::testing::random_array({3, 3}, rng, 0.1, 1.0);
  const ad::Tensor out = f(x0);
  ad::Tape tape;
  const ad::Tensor xv = tape.variable(x0);
  std::vector<ad::Tensor> ts{xv, tape.constant(a), tape.constant(b)};
  const ad::Tensor l = ad::sum(ad::mul(aggregate_tensor(AggregationKind::var, ts), tape.constant(w)));
  const auto fd = xhm::testing::central_difference([&](const Array& x) { return f(x).item(); }, x0);
  EXPECT_LE(xhm::testing::relative_error(ad::grad(l, xv).array().data, fd), 1e-7);
}

TEST(Ensemble, Validation) {
  EnsembleSpec e;
  e.members = {ExplainerSpec::of(Method::saliency)};
  EXPECT_EQ(code_of([&] { e.validate(); }), Errc::invalid_argument);
  e.members.push_back(ExplainerSpec::of(Method::saliency));
  EXPECT_EQ(code_of([&] { e.validate(); }), Errc::invalid_argument);
  e.members.back() = ExplainerSpec::of(Method::lrp);
  EXPECT_NO_THROW(e.validate());
  EXPECT_EQ(parse_aggregation("AGG-Var"), AggregationKind::var);
  EXPECT_EQ(code_of([] { parse_aggregation("median"); }), Errc::config);
}

TEST(BiasVariance, HandExample) {
  const BiasVarianceReport r = bias_variance_report({Heatmap(1, 1, {1.0})}, {{Heatmap(1, 1, {0.0})}, {Heatmap(1, 1, {2.0})}});
  EXPECT_EQ(r.mean_mse, 1.0);
  EXPECT_EQ(r.aggregate_mse, 0.0);
  EXPECT_EQ(r.variance, 1.0);
}

TEST(BiasVariance, MethodsEqualTruth) {
  const Heatmap t(1, 3, {0.2, 0.3, 0.5});
  const BiasVarianceReport r = bias_variance_report({t}, {{t}, {t}, {t}});
  EXPECT_EQ(r.mean_mse, 0.0);
  EXPECT_EQ(r.aggregate_mse, 0.0);
  EXPECT_EQ(r.variance, 0.0);
}

TEST(BiasVariance, IdenticalMethodsHaveNoVariance) {
  const Heatmap t(1, 2, {0.2, 0.8}), m(1, 2, {0.6, 0.4});
  const BiasVarianceReport r = bias_variance_report({t}, {{m}, {m}});
  EXPECT_EQ(r.variance, 0.0);
  EXPECT_DOUBLE_EQ(r.mean_mse, r.aggregate_mse);
}

TEST(BiasVariance, IdentityOnRandomEnsembles) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> jd(2, 6), nd(1, 10), md(2, 8);
  std::uniform_real_distribution<double> vd(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int J = jd(rng), N = nd(rng), m = md(rng);
    auto map = [&] {
      std::vector<double> v(static_cast<std::size_t>(m * m));
      for (double& x : v) x = vd(rng);
      return Heatmap(static_cast<std::size_t>(m), static_cast<std::size_t>(m), v);
    };
    std::vector<Heatmap> truth;
    for (int n = 0; n < N; ++n) truth.push_back(map());
    std::vector<std::vector<Heatmap>> maps(static_cast<std::size_t>(J));
    for (auto& method : maps)
      for (int n = 0; n < N; ++n) method.push_back(map());
    const BiasVarianceReport r = bias_variance_report(truth, maps);
    EXPECT_NEAR(r.mean_mse, r.aggregate_mse + r.variance, 1e-9 * r.mean_mse);
    EXPECT_GE(r.variance, 0.0);
    EXPECT_LE(r.aggregate_mse, r.mean_mse);
  }
}

TEST(BiasVariance, EmptyInput) {
  EXPECT_EQ(code_of([] { bias_variance_report({}, {}); }), Errc::invalid_argument);
}

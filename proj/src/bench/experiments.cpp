#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "xhm/bench.hpp"
#include "xhm/error.hpp"

namespace xhm {

std::vector<SamplePair> draw_pairs(const Network& net, const Dataset& data, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<SamplePair> pairs;
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::size_t pending = none;
  for (std::size_t idx : order) {
    if (pairs.size() == count) break;
    if (predict_class(net, data.image(idx)) != data.labels[idx]) continue;
    if (pending == none) {
      pending = idx;
    } else if (data.labels[idx] != data.labels[pending]) {
      pairs.push_back({pending, idx});
      pending = none;
    }
  }
  if (pairs.size() < count)
    throw Error(Errc::invalid_argument, "only " + std::to_string(pairs.size()) + " usable pairs, " +
                                            std::to_string(count) + " requested");
  return pairs;
}

void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  // The lowest failing task wins, whatever the schedule was.
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

MetricReport TransferMatrix::report(std::size_t attacked, std::size_t evaluated) const {
  return MetricReport{records.at(attacked).at(evaluated)};
}

FieldSummary BlankSquareTable::field(std::size_t method, double BlankSquareRecord::*member, bool preserved_only) const {
  std::vector<double> values;
  for (const BlankSquareRecord& r : records.at(method))
    if (!preserved_only || r.label_preserved) values.push_back(r.*member);
  return summarize(values);
}

namespace {

std::vector<Explainer> singles(const std::vector<ExplainerSpec>& specs) {
  std::vector<Explainer> out;
  for (const ExplainerSpec& s : specs) out.push_back(Explainer::single(s));
  return out;
}

std::vector<std::string> names(const std::vector<Explainer>& explainers) {
  std::vector<std::string> out;
  for (const Explainer& e : explainers) out.push_back(e.name());
  return out;
}

// Stochastic explainers draw from a stream fixed by (global seed, sample, method).
AttackConfig task_attack(const AttackConfig& base, std::size_t sample, std::size_t method) {
  AttackConfig c = base;
  std::uint64_t v = base.seed ^ (0x9e3779b97f4a7c15ull * (sample + 1)) ^ (0xc2b2ae3d27d4eb4full * (method + 1));
  v = (v ^ (v >> 30)) * 0xbf58476d1ce4e5b9ull;
  v = (v ^ (v >> 27)) * 0x94d049bb133111ebull;
  c.seed = v ^ (v >> 31);
  return c;
}

Heatmap target_map(const Network& net, const Array& target_image, const Explainer& explainer) {
  return explanation(net, target_image, predict_class(net, target_image), explainer);
}

}  // namespace

TransferMatrix run_transfer_matrix(const Network& net, const Dataset& data, const ExperimentConfig& config) {
  config.validate();
  if (config.explainers.size() < 2) throw Error(Errc::config, "the transfer experiment needs at least two explainers");
  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  const std::vector<Explainer> methods = singles(config.explainers);

  TransferMatrix m;
  m.methods = names(methods);
  m.pairs = draw_pairs(relu_net, data, config.n_pairs, config.seed);
  const std::size_t n_methods = methods.size(), n_pairs = m.pairs.size();
  m.records.assign(n_methods, std::vector<std::vector<SampleRecord>>(n_methods, std::vector<SampleRecord>(n_pairs)));

  parallel_for(n_pairs * n_methods, config.threads, [&](std::size_t task) {
    const std::size_t p = task / n_methods, a = task % n_methods;
    const Array x = data.image(m.pairs[p].source), target = data.image(m.pairs[p].target);
    const AttackResult r = attack_target(net, x, methods[a], target_map(relu_net, target, methods[a]), task_attack(config.attack, p, a));
    for (std::size_t b = 0; b < n_methods; ++b)
      m.records[a][b][p] = score_attack(net, x, target, r, methods[b], config.topk);
  });
  return m;
}

RobustnessTable run_aggregate_robustness(const Network& net, const Dataset& data, const ExperimentConfig& config) {
  config.validate();
  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  std::vector<Explainer> methods = singles(config.ensemble.members);
  methods.push_back(Explainer::ensemble(config.ensemble));

  RobustnessTable t;
  t.methods = names(methods);
  t.pairs = draw_pairs(relu_net, data, config.n_pairs, config.seed);
  const std::size_t n_methods = methods.size(), n_pairs = t.pairs.size();
  t.reports.assign(n_methods, MetricReport{std::vector<SampleRecord>(n_pairs)});

  parallel_for(n_pairs * n_methods, config.threads, [&](std::size_t task) {
    const std::size_t p = task / n_methods, a = task % n_methods;
    const Array x = data.image(t.pairs[p].source), target = data.image(t.pairs[p].target);
    const AttackResult r = attack_target(net, x, methods[a], target_map(relu_net, target, methods[a]), task_attack(config.attack, p, a));
    t.reports[a].samples[p] = score_attack(net, x, target, r, methods[a], config.topk);
  });
  return t;
}

BlankSquareTable run_blank_square(const Network& net, const Dataset& data, const ExperimentConfig& config) {
  config.validate();
  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  std::vector<Explainer> methods = singles(config.ensemble.members);
  methods.push_back(Explainer::ensemble(config.ensemble));

  BlankSquareTable t;
  t.methods = names(methods);
  for (const SamplePair& p : draw_pairs(relu_net, data, config.n_pairs, config.seed)) t.samples.push_back(p.source);
  const std::size_t n_methods = methods.size(), n_samples = t.samples.size();
  t.records.assign(n_methods, std::vector<BlankSquareRecord>(n_samples));

  parallel_for(n_samples * n_methods, config.threads, [&](std::size_t task) {
    const std::size_t s = task / n_methods, a = task % n_methods;
    const AttackResult r = attack_blank_square(net, data.image(t.samples[s]), methods[a], task_attack(config.attack, s, a));
    t.records[a][s] = {r.region_before, r.region_after, r.preserved_ratio, r.image_mse, r.label_preserved};
  });
  return t;
}

}  // namespace xhm

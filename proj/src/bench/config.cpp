#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "xhm/bench.hpp"
#include "xhm/error.hpp"

namespace xhm {

using nlohmann::json;

namespace {

void allow_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw Error(Errc::config, where + " must be a JSON object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) throw Error(Errc::config, "unknown key '" + item.key() + "' in " + where);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

std::size_t count_field(const json& obj, const char* key, std::size_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw Error(Errc::config, std::string("'") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

template <typename F>
auto config_errors(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::config, std::string("malformed configuration: ") + e.what());
  }
}

LayerSpec parse_layer(const json& l, std::size_t index) {
  const std::string where = "layer " + std::to_string(index);
  if (!l.is_object() || !l.contains("kind")) throw Error(Errc::config, where + " needs a 'kind'");
  const std::string kind = l.at("kind").get<std::string>();
  if (kind == "dense") {
    allow_keys(l, {"kind", "in", "out"}, where);
    return LayerSpec::dense(count_field(l, "in", 0), count_field(l, "out", 0));
  }
  if (kind == "conv") {
    allow_keys(l, {"kind", "kernel", "in", "out", "stride"}, where);
    const auto kernel = l.at("kernel").get<std::vector<std::size_t>>();
    if (kernel.size() != 2) throw Error(Errc::config, where + ": 'kernel' must be [rows, cols]");
    return LayerSpec::conv(kernel[0], kernel[1], count_field(l, "in", 0), count_field(l, "out", 0),
                           count_field(l, "stride", 1));
  }
  if (kind == "maxpool" || kind == "avgpool") {
    allow_keys(l, {"kind", "window"}, where);
    const std::size_t w = count_field(l, "window", 0);
    return kind == "maxpool" ? LayerSpec::max_pool(w) : LayerSpec::avg_pool(w);
  }
  if (kind == "activation") {
    allow_keys(l, {"kind"}, where);
    return LayerSpec::activation();
  }
  if (kind == "flatten") {
    allow_keys(l, {"kind"}, where);
    return LayerSpec::flatten();
  }
  throw Error(Errc::unsupported, where + ": unsupported layer kind '" + kind + "'");
}

}  // namespace

Architecture parse_architecture(const json& spec) {
  return config_errors([&] {
    allow_keys(spec, {"input", "classes", "layers"}, "architecture");
    Architecture a;
    a.input = spec.at("input").get<std::vector<std::size_t>>();
    a.classes = count_field(spec, "classes", 0);
    const json& layers = spec.at("layers");
    if (!layers.is_array()) throw Error(Errc::config, "'layers' must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) a.layers.push_back(parse_layer(layers[i], i));
    a.layer_shapes();
    return a;
  });
}

json architecture_json(const Architecture& arch) {
  json layers = json::array();
  for (const LayerSpec& l : arch.layers) {
    switch (l.kind) {
      case LayerKind::dense: layers.push_back({{"kind", "dense"}, {"in", l.in}, {"out", l.out}}); break;
      case LayerKind::conv:
        layers.push_back({{"kind", "conv"},
                          {"kernel", {l.kernel_h, l.kernel_w}},
                          {"in", l.in},
                          {"out", l.out},
                          {"stride", l.stride}});
        break;
      case LayerKind::max_pool: layers.push_back({{"kind", "maxpool"}, {"window", l.window}}); break;
      case LayerKind::avg_pool: layers.push_back({{"kind", "avgpool"}, {"window", l.window}}); break;
      case LayerKind::activation: layers.push_back({{"kind", "activation"}}); break;
      case LayerKind::flatten: layers.push_back({{"kind", "flatten"}}); break;
    }
  }
  return {{"input", arch.input}, {"classes", arch.classes}, {"layers", layers}};
}

Architecture load_architecture(const std::string& spec) {
  if (spec == "reference") return reference_architecture();
  std::ifstream in(spec);
  if (!in) throw Error(Errc::io, "cannot open architecture file " + spec);
  return config_errors([&] { return parse_architecture(json::parse(in)); });
}

ExplainerSpec parse_explainer(const json& j) {
  return config_errors([&] {
    if (j.is_string()) return ExplainerSpec::of(parse_method(j.get<std::string>()));
    if (!j.is_object() || !j.contains("method")) throw Error(Errc::config, "explainer needs a 'method'");
    ExplainerSpec s = ExplainerSpec::of(parse_method(j.at("method").get<std::string>()));
    switch (s.method) {
      case Method::integrated_gradients:
        allow_keys(j, {"method", "steps"}, "explainer IG");
        s.steps = count_field(j, "steps", s.steps);
        break;
      case Method::smoothgrad:
        allow_keys(j, {"method", "sigma", "samples", "seed"}, "explainer SG");
        s.sigma = get_or(j, "sigma", s.sigma);
        s.samples = count_field(j, "samples", s.samples);
        s.seed = get_or<std::uint64_t>(j, "seed", s.seed);
        break;
      case Method::lrp:
        allow_keys(j, {"method", "epsilon"}, "explainer LRP");
        s.epsilon = get_or(j, "epsilon", s.epsilon);
        break;
      default: allow_keys(j, {"method"}, std::string("explainer ") + method_code(s.method));
    }
    try {
      s.validate();
    } catch (const Error& e) {
      throw Error(Errc::config, e.what());
    }
    return s;
  });
}

json explainer_json(const ExplainerSpec& s) {
  json j = {{"method", method_code(s.method)}};
  switch (s.method) {
    case Method::integrated_gradients: j["steps"] = s.steps; break;
    case Method::smoothgrad:
      j["sigma"] = s.sigma;
      j["samples"] = s.samples;
      j["seed"] = s.seed;
      break;
    case Method::lrp: j["epsilon"] = s.epsilon; break;
    default: break;
  }
  return j;
}

void ExperimentConfig::validate() const {
  if (n_pairs == 0) throw Error(Errc::config, "n_pairs must be at least 1");
  if (threads == 0) throw Error(Errc::config, "threads must be at least 1");
  if (!(topk > 0.0 && topk <= 1.0)) throw Error(Errc::config, "topk must be in (0, 1]");
  try {
    for (const ExplainerSpec& e : explainers) e.validate();
    ensemble.validate();
    attack.validate();
  } catch (const Error& e) {
    throw Error(Errc::config, e.what());
  }
}

ExperimentConfig parse_config(const json& j) {
  return config_errors([&] {
    allow_keys(j, {"model", "spec", "dataset", "n_pairs", "seed", "explainers", "ensemble", "attack", "topk", "threads"},
               "config");
    ExperimentConfig c;
    c.model = get_or<std::string>(j, "model", "");
    c.spec = get_or<std::string>(j, "spec", c.spec);
    c.dataset = get_or<std::string>(j, "dataset", "");
    c.n_pairs = count_field(j, "n_pairs", c.n_pairs);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.topk = get_or(j, "topk", c.topk);
    c.threads = count_field(j, "threads", c.threads);

    const std::vector<ExplainerSpec> defaults{ExplainerSpec::of(Method::saliency),
                                              ExplainerSpec::of(Method::guided_backprop),
                                              ExplainerSpec::of(Method::lrp)};
    if (j.contains("explainers")) {
      for (const json& e : j.at("explainers")) c.explainers.push_back(parse_explainer(e));
    } else {
      c.explainers = defaults;
    }

    c.ensemble.members = defaults;
    if (j.contains("ensemble")) {
      const json& e = j.at("ensemble");
      allow_keys(e, {"members", "kind"}, "ensemble");
      if (e.contains("members")) {
        c.ensemble.members.clear();
        for (const json& m : e.at("members")) c.ensemble.members.push_back(parse_explainer(m));
      }
      if (e.contains("kind")) c.ensemble.kind = parse_aggregation(e.at("kind").get<std::string>());
    }

    if (j.contains("attack")) {
      const json& a = j.at("attack");
      allow_keys(a, {"eta", "iters", "gamma", "beta_start", "beta_end", "clamp", "optimizer", "seed"}, "attack");
      AttackConfig& ac = c.attack;
      ac.eta = get_or(a, "eta", ac.eta);
      ac.iterations = count_field(a, "iters", ac.iterations);
      if (a.contains("gamma")) {
        const json& g = a.at("gamma");
        if (g.is_null() || (g.is_string() && g.get<std::string>() == "auto"))
          ac.gamma.reset();
        else
          ac.gamma = g.get<double>();
      }
      ac.beta_start = get_or(a, "beta_start", ac.beta_start);
      ac.beta_end = get_or(a, "beta_end", ac.beta_end);
      if (a.contains("clamp")) {
        const auto range = a.at("clamp").get<std::vector<double>>();
        if (range.size() != 2) throw Error(Errc::config, "'clamp' must be [low, high]");
        ac.clamp_low = range[0];
        ac.clamp_high = range[1];
      }
      if (a.contains("optimizer")) ac.optimizer = parse_optimizer(a.at("optimizer").get<std::string>());
      ac.seed = get_or<std::uint64_t>(a, "seed", ac.seed);
    }
    c.validate();
    return c;
  });
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open config " + path.string());
  ExperimentConfig c = config_errors([&] { return parse_config(json::parse(in)); });
  // Relative paths are taken relative to the config file.
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.model);
  resolve(c.dataset);
  if (c.spec != "reference") resolve(c.spec);
  return c;
}

json config_json(const ExperimentConfig& c) {
  json explainers = json::array(), members = json::array();
  for (const ExplainerSpec& e : c.explainers) explainers.push_back(explainer_json(e));
  for (const ExplainerSpec& e : c.ensemble.members) members.push_back(explainer_json(e));
  json gamma = c.attack.gamma ? json(*c.attack.gamma) : json("auto");
  return {{"model", c.model},
          {"spec", c.spec},
          {"dataset", c.dataset},
          {"n_pairs", c.n_pairs},
          {"seed", c.seed},
          {"topk", c.topk},
          {"threads", c.threads},
          {"explainers", explainers},
          {"ensemble", {{"members", members}, {"kind", c.ensemble.kind == AggregationKind::mean ? "mean" : "var"}}},
          {"attack",
           {{"eta", c.attack.eta},
            {"iters", c.attack.iterations},
            {"gamma", gamma},
            {"beta_start", c.attack.beta_start},
            {"beta_end", c.attack.beta_end},
            {"clamp", {c.attack.clamp_low, c.attack.clamp_high}},
            {"optimizer", optimizer_name(c.attack.optimizer)},
            {"seed", c.attack.seed}}}};
}

}  // namespace xhm

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xhm/bench.hpp"
#include "xhm/error.hpp"
#include "xhm/pgm.hpp"

namespace {

using namespace xhm;

struct TrainArgs {
  std::string spec = "reference", data, out;
  TrainOptions options;
};

struct ExplainArgs {
  std::string model, spec = "reference", image, data, method = "SM", members = "SM,GB,LRP", out;
  long index = -1;
  long cls = -1;
  ExplainerSpec explainer;
};

struct RunArgs {
  std::string model, config, out, method;
  std::size_t pair = 0;
  bool blank_square = false;
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t end = std::min(s.find(',', start), s.size());
    if (end > start) out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

Explainer explainer_from_name(const std::string& name, const ExplainerSpec& base, const std::vector<ExplainerSpec>& members) {
  if (name == "AGG-Mean" || name == "AGG-Var" || name == "mean" || name == "var") {
    EnsembleSpec e;
    e.members = members;
    e.kind = parse_aggregation(name);
    return Explainer::ensemble(e);
  }
  ExplainerSpec s = base;
  s.method = parse_method(name);
  return Explainer::single(s);
}

void run_train(const TrainArgs& a) {
  const Architecture arch = load_architecture(a.spec);
  const DatasetSplit split = load_idx_directory(a.data);
  const auto start = std::chrono::steady_clock::now();
  const TrainResult r = train(arch, split.train, &split.test, a.options);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_weights(r.net, a.out);
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) std::printf("epoch %zu loss %.6f\n", e + 1, r.epoch_loss[e]);
  std::printf("train accuracy %.4f\ntest accuracy %.4f\nseconds %.1f\nwrote %s\n", r.train_accuracy,
              r.test_accuracy, seconds, a.out.c_str());
}

void run_explain(const ExplainArgs& a) {
  const Network net = load_weights(load_architecture(a.spec), a.model);
  Array x;
  if (!a.image.empty()) {
    x = image_input(read_pgm(a.image));
    x.shape = net.input_shape();
    if (x.data.size() != numel(x.shape))
      throw Error(Errc::shape_mismatch, "image " + a.image + " does not match the network input " + to_string(x.shape));
  } else {
    if (a.data.empty() || a.index < 0) throw Error(Errc::config, "explain needs --image or --data with --index");
    const DatasetSplit split = load_idx_directory(a.data);
    if (static_cast<std::size_t>(a.index) >= split.test.size())
      throw Error(Errc::invalid_argument, "--index beyond the test split");
    x = split.test.image(static_cast<std::size_t>(a.index));
  }
  std::vector<ExplainerSpec> members;
  for (const std::string& m : split(a.members)) {
    ExplainerSpec s = a.explainer;
    s.method = parse_method(m);
    members.push_back(s);
  }
  const Explainer explainer = explainer_from_name(a.method, a.explainer, members);
  explainer.validate();
  const std::size_t cls = a.cls >= 0 ? static_cast<std::size_t>(a.cls) : predict_class(net, x);
  const Heatmap h = explanation(net, x, cls, explainer);
  render_heatmap(h, a.out);
  std::printf("%s of class %zu (predicted %zu) written to %s\n", explainer.name().c_str(), cls, predict_class(net, x),
              a.out.c_str());
}

void write_trace(const AttackResult& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << "iteration,beta,loss\n";
  char buf[64];
  for (std::size_t t = 0; t < r.loss_trace.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", t, r.beta_trace[t], r.loss_trace[t]);
    out << buf;
  }
}

void run_attack(const RunArgs& a) {
  ExperimentConfig config = load_config(a.config);
  if (!a.model.empty()) config.model = a.model;
  const Network net = load_weights(load_architecture(config.spec), config.model);
  const Network relu_net = set_activation_mode(net, ActivationKind::relu());
  const DatasetSplit split = load_idx_directory(config.dataset);
  const auto pairs = draw_pairs(relu_net, split.test, a.pair + 1, config.seed);
  const SamplePair pair = pairs[a.pair];
  const Explainer explainer =
      a.method.empty() ? Explainer::single(config.explainers.at(0))
                       : explainer_from_name(a.method, ExplainerSpec{}, config.ensemble.members);
  const Array x = split.test.image(pair.source);
  const std::filesystem::path dir = a.out;
  std::filesystem::create_directories(dir);

  AttackResult r;
  if (a.blank_square) {
    r = attack_blank_square(net, x, explainer, config.attack);
    std::printf("%s blank square on test image %zu: relevance %.6f -> %.6f, preserved ratio %.6f, image mse %.3g, "
                "label %s\n",
                explainer.name().c_str(), pair.source, r.region_before, r.region_after, r.preserved_ratio,
                r.image_mse, r.label_preserved ? "preserved" : "flipped");
  } else {
    const Array target = split.test.image(pair.target);
    const Heatmap target_map = explanation(relu_net, target, predict_class(relu_net, target), explainer);
    r = attack_target(net, x, explainer, target_map, config.attack);
    const SampleRecord s = score_attack(net, x, target, r, explainer, config.topk);
    render_heatmap(target_map, dir / "target_map.pgm");
    write_pgm(input_image(target), dir / "target.pgm");
    std::printf("%s attack, source %zu -> target %zu: delta pcc %.4f, delta topk %.4f, delta mse %.3g, image mse "
                "%.3g, label %s\n",
                explainer.name().c_str(), pair.source, pair.target, s.delta_pcc, s.delta_topk, s.delta_mse,
                s.image_mse, s.label_preserved ? "preserved" : "flipped");
  }
  write_pgm(input_image(x), dir / "source.pgm");
  write_pgm(input_image(r.adversarial), dir / "adversarial.pgm");
  render_heatmap(r.start_explanation, dir / "start_map.pgm");
  render_heatmap(r.final_explanation, dir / "final_map.pgm");
  write_trace(r, dir / "trace.csv");
  std::ofstream(dir / "config.json") << config_json(config).dump(2) << "\n";
  std::printf("wrote %s\n", dir.c_str());
}

struct Loaded {
  ExperimentConfig config;
  Network net;
  Dataset test;
};

Loaded load_experiment(const RunArgs& a) {
  ExperimentConfig config = load_config(a.config);
  if (!a.model.empty()) config.model = a.model;
  Network net = load_weights(load_architecture(config.spec), config.model);
  return {config, std::move(net), load_idx_directory(config.dataset).test};
}

void print_reports(const std::vector<std::string>& rows, const std::vector<MetricReport>& reports) {
  std::printf("%-22s %4s %18s %18s %18s %10s\n", "method", "n", "delta pcc", "delta topk", "delta mse", "image mse");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const MetricReport& r = reports[i];
    const auto pcc = r.field(&SampleRecord::delta_pcc), topk = r.field(&SampleRecord::delta_topk),
               mse = r.field(&SampleRecord::delta_mse), img = r.field(&SampleRecord::image_mse);
    std::printf("%-22s %4zu %9.4f +- %6.4f %9.4f +- %6.4f %9.2e +- %6.1e %10.2e\n", rows[i].c_str(),
                r.preserved_count(), pcc.mean, pcc.standard_error, topk.mean, topk.standard_error, mse.mean,
                mse.standard_error, img.mean);
  }
}

void run_transfer(const RunArgs& a) {
  const Loaded l = load_experiment(a);
  const TransferMatrix m = run_transfer_matrix(l.net, l.test, l.config);
  write_transfer_csv(m, l.config, a.out);
  std::vector<std::string> rows;
  std::vector<MetricReport> reports;
  for (std::size_t i = 0; i < m.methods.size(); ++i)
    for (std::size_t j = 0; j < m.methods.size(); ++j) {
      rows.push_back(m.methods[i] + " -> " + m.methods[j]);
      reports.push_back(m.report(i, j));
    }
  print_reports(rows, reports);
}

void run_aggregate(const RunArgs& a) {
  const Loaded l = load_experiment(a);
  const RobustnessTable t = run_aggregate_robustness(l.net, l.test, l.config);
  write_robustness_csv(t, l.config, a.out);
  print_reports(t.methods, t.reports);
}

void run_blank(const RunArgs& a) {
  const Loaded l = load_experiment(a);
  const BlankSquareTable t = run_blank_square(l.net, l.test, l.config);
  write_blank_square_csv(t, l.config, a.out);
  std::printf("%-10s %4s %10s %10s %18s\n", "method", "n", "before", "after", "preserved ratio");
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    const auto ratio = t.field(m, &BlankSquareRecord::ratio);
    std::printf("%-10s %4zu %10.4f %10.4f %9.4f +- %6.4f\n", t.methods[m].c_str(),
                t.samples.size(), t.field(m, &BlankSquareRecord::before).mean,
                t.field(m, &BlankSquareRecord::after).mean, ratio.mean, ratio.standard_error);
  }
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--model", a.model, "Weight file; overrides the config");
  cmd->add_option("--out", a.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heatmap explanations, attacks on them and ensemble defenses"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier on an IDX dataset directory");
  train_cmd->add_option("--spec", train_args.spec, "\"reference\" or an architecture JSON file");
  train_cmd->add_option("--data", train_args.data, "IDX dataset directory")->required();
  train_cmd->add_option("--out", train_args.out, "Weight file to write")->required();
  train_cmd->add_option("--seed", train_args.options.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--epochs", train_args.options.epochs, "Training epochs");
  train_cmd->add_option("--lr", train_args.options.learning_rate, "SGD learning rate");
  train_cmd->add_option("--batch", train_args.options.batch_size, "Minibatch size");

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Render an explanation heatmap as PGM");
  explain_cmd->add_option("--model", ex.model, "Weight file")->required();
  explain_cmd->add_option("--spec", ex.spec, "\"reference\" or an architecture JSON file");
  auto* image_opt = explain_cmd->add_option("--image", ex.image, "Input image (PGM, values / 255)");
  auto* data_opt = explain_cmd->add_option("--data", ex.data, "IDX dataset directory (with --index)");
  explain_cmd->add_option("--index", ex.index, "Test-split image index");
  image_opt->excludes(data_opt);
  explain_cmd->add_option("--method", ex.method, "SM, GB, IG, SG, LRP, AGG-Mean or AGG-Var");
  explain_cmd->add_option("--members", ex.members, "Comma-separated ensemble members");
  explain_cmd->add_option("--class", ex.cls, "Explained class (default: predicted)");
  explain_cmd->add_option("--steps", ex.explainer.steps, "Integrated-gradients steps");
  explain_cmd->add_option("--sigma", ex.explainer.sigma, "SmoothGrad noise level");
  explain_cmd->add_option("--samples", ex.explainer.samples, "SmoothGrad samples");
  explain_cmd->add_option("--seed", ex.explainer.seed, "SmoothGrad seed");
  explain_cmd->add_option("--epsilon", ex.explainer.epsilon, "LRP stabilizer");
  explain_cmd->add_option("--out", ex.out, "PGM file to write")->required();

  RunArgs attack_args, transfer_args, aggregate_args, blank_args;
  auto* attack_cmd = app.add_subcommand("attack", "Attack one source/target pair and write images and traces");
  add_run_options(attack_cmd, attack_args);
  attack_cmd->add_option("--method", attack_args.method, "Attacked explainer (default: first configured)");
  attack_cmd->add_option("--pair", attack_args.pair, "Index of the drawn pair");
  attack_cmd->add_flag("--blank-square", attack_args.blank_square, "Blank the centered square instead");
  auto* transfer_cmd = app.add_subcommand("transfer", "Transferability matrix between explainers");
  add_run_options(transfer_cmd, transfer_args);
  auto* aggregate_cmd = app.add_subcommand("aggregate-bench", "Robustness of single methods and the ensemble");
  add_run_options(aggregate_cmd, aggregate_args);
  auto* blank_cmd = app.add_subcommand("blank-square", "Blank-square attack on single methods and the ensemble");
  add_run_options(blank_cmd, blank_args);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) run_train(train_args);
    if (*explain_cmd) run_explain(ex);
    if (*attack_cmd) run_attack(attack_args);
    if (*transfer_cmd) run_transfer(transfer_args);
    if (*aggregate_cmd) run_aggregate(aggregate_args);
    if (*blank_cmd) run_blank(blank_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

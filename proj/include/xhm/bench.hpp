#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "xhm/aggregate.hpp"
#include "xhm/attack.hpp"
#include "xhm/dataset.hpp"
#include "xhm/metrics.hpp"
#include "xhm/model.hpp"

namespace xhm {

/// Architecture from JSON:
///   {"input": [1,28,28], "classes": 10, "layers": [
///     {"kind": "conv", "kernel": [5,5], "in": 1, "out": 8, "stride": 1},
///     {"kind": "activation"}, {"kind": "maxpool", "window": 2},
///     {"kind": "avgpool", "window": 2}, {"kind": "flatten"},
///     {"kind": "dense", "in": 256, "out": 10}]}
/// Throws Errc::unsupported for an unknown layer kind, Errc::config for
/// unknown keys or malformed values, Errc::spec_mismatch if layers do not compose.
Architecture parse_architecture(const nlohmann::json& spec);
nlohmann::json architecture_json(const Architecture& arch);
/// "reference" names the built-in reference architecture; anything else is a JSON file.
Architecture load_architecture(const std::string& spec);

struct ExperimentConfig {
  std::string model;                 // weight file
  std::string spec = "reference";    // architecture
  std::string dataset;               // IDX directory; pairs come from its test split
  std::size_t n_pairs = 20;
  std::uint64_t seed = 0;
  std::vector<ExplainerSpec> explainers;
  EnsembleSpec ensemble;
  AttackConfig attack;
  double topk = 0.10;
  std::size_t threads = 1;

  /// Throws Errc::config for n_pairs = 0 or inconsistent settings.
  void validate() const;
};

/// Parses a config object. Unknown keys anywhere are rejected with Errc::config.
ExperimentConfig parse_config(const nlohmann::json& json);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved configuration, defaults included.
nlohmann::json config_json(const ExperimentConfig& config);

/// Explainer spec from "SM" or {"method": "SG", "sigma": 0.1, "samples": 32, "seed": 0}.
ExplainerSpec parse_explainer(const nlohmann::json& json);
nlohmann::json explainer_json(const ExplainerSpec& spec);

struct SamplePair {
  std::size_t source = 0;  // index into the dataset
  std::size_t target = 0;
};

/// Walks a seeded shuffle of the dataset and pairs consecutive usable images:
/// both correctly classified by `net`, with different labels.
/// Throws Errc::invalid_argument if fewer than `count` pairs exist.
std::vector<SamplePair> draw_pairs(const Network& net, const Dataset& data, std::size_t count, std::uint64_t seed);

/// Runs task(0..count-1) on up to `threads` threads. Each task must write only
/// its own output slot; results are therefore independent of the schedule.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& task);

struct TransferMatrix {
  std::vector<std::string> methods;
  /// records[a][b][pair]: metrics under method b after attacking method a.
  std::vector<std::vector<std::vector<SampleRecord>>> records;
  std::vector<SamplePair> pairs;

  MetricReport report(std::size_t attacked, std::size_t evaluated) const;
};

struct RobustnessTable {
  std::vector<std::string> methods;  // single methods, then the ensemble
  std::vector<MetricReport> reports;
  std::vector<SamplePair> pairs;
};

struct BlankSquareRecord {
  double before = 0.0, after = 0.0, ratio = 1.0;
  double image_mse = 0.0;
  bool label_preserved = true;
};

struct BlankSquareTable {
  std::vector<std::string> methods;
  std::vector<std::vector<BlankSquareRecord>> records;  // [method][sample]
  std::vector<std::size_t> samples;                     // dataset indices

  FieldSummary field(std::size_t method, double BlankSquareRecord::*member, bool preserved_only = true) const;
};

/// Every configured explainer attacked and scored under every other one.
TransferMatrix run_transfer_matrix(const Network& net, const Dataset& data, const ExperimentConfig& config);
/// Each ensemble member attacked on its own, then the ensemble attacked directly.
RobustnessTable run_aggregate_robustness(const Network& net, const Dataset& data, const ExperimentConfig& config);
/// Blank-square attack on the sources of the drawn pairs for every member and the ensemble.
BlankSquareTable run_blank_square(const Network& net, const Dataset& data, const ExperimentConfig& config);

/// CSV writers. Every file starts with comment lines holding the resolved
/// configuration and the pairing rule.
void write_transfer_csv(const TransferMatrix& m, const ExperimentConfig& config, const std::filesystem::path& dir);
void write_robustness_csv(const RobustnessTable& t, const ExperimentConfig& config,
                          const std::filesystem::path& dir);
void write_blank_square_csv(const BlankSquareTable& t, const ExperimentConfig& config,
                            const std::filesystem::path& dir);

}  // namespace xhm

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sloop/metrics.hpp"
#include "sloop/pipeline.hpp"
#include "sloop/synthpop.hpp"

namespace sloop {

enum class AnnotatorMode { oracle, simulated, live };

struct AnnotatorSpec {
  AnnotatorMode mode = AnnotatorMode::oracle;
  int count = 3;
  double accuracy = 1.0;  // simulated only
};

// "oracle", "oracle:N", "simulated:ACC", "simulated:ACC:N" or "live".
AnnotatorSpec annotators_from_string(const std::string& text);

struct ExperimentConfig {
  SyntheticSpec spec;
  std::optional<std::filesystem::path> dataset;  // load instead of generating
  std::string workflow = "synthetic";
  std::optional<CascadeConfig> cascade;  // overrides the workflow's cascade
  std::optional<double> budget;          // overrides feedback.budget_fraction
  int iterations = 2;
  AnnotatorSpec annotators;
  std::uint64_t seed = 7;
  std::filesystem::path out;  // metrics.csv, cmc.csv and the in-process DEI data dir
  std::string dei_url;        // empty: run an in-process DEI under out/dei
  int workers = 1;
  bool sync = false;
  std::size_t gold_pairs = 20;
  std::int64_t live_poll_ms = 2000;
  // Preset model or engine, e.g. to share alignment work between runs.
  std::optional<PrimedCnnModel> model;
  std::shared_ptr<MatchEngine> engine;
};

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  std::vector<std::vector<double>> cmc;  // one curve per row
  std::vector<RankedList> rankings;      // final
  CohortPartition partition;
  EnsembleWeights weights;
  Truth truth;  // DEI image id -> individual
  std::size_t images = 0;
  std::size_t indexed = 0;
  double seconds = 0.0;

  bool all_indexed() const { return images > 0 && indexed == images; }
};

// generate/load -> ingest -> index -> feedback iterations -> verify/index.
ExperimentResult run_experiment(const ExperimentConfig& config);

void write_experiment_outputs(const ExperimentResult& result, const std::filesystem::path& out);

}  // namespace sloop

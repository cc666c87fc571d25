#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sloop/dei/api.hpp"
#include "sloop/ensemble.hpp"
#include "sloop/feedback.hpp"
#include "sloop/pair_score.hpp"
#include "sloop/synthpop.hpp"
#include "sloop/workflow.hpp"

namespace sloop {

// Binary feature-set blob: "SLFS", u32 version, u32 dimension, keypoints,
// patches, skipped anchors; little-endian, f64 values.
std::vector<std::uint8_t> encode_feature_set(const ImageFeatures& f);
ImageFeatures decode_feature_set(std::span<const std::uint8_t> bytes);

struct CnnTrainingSpec {
  std::uint64_t seed = 1007;
  int individuals = 32;
  int epochs = 20;
  double lr = 0.01;
  int batch = 16;
  // Sampled different-individual pairs per same pair.
  double negatives_per_positive = 2.0;
};

// Matching configuration carried by a workflow's params block.
struct MatchSettings {
  FeatureParams features;
  MatcherParams matcher;
  CascadeConfig cascade;
  EnsembleWeights weights;
  double eta = 0.5;
  CnnTrainingSpec cnn;
  FeedbackConfig feedback;

  bool needs_cnn() const;
};

MatchSettings match_settings_from_workflow(const WorkflowDef& def);

// Example set for the primed CNN: all same pairs plus seeded negatives of a
// population disjoint from the one being indexed.
std::vector<CnnExample> cnn_training_examples(const Population& pop, const MatchSettings& settings);

PrimedCnnModel train_primed_cnn(const SyntheticSpec& base, const MatchSettings& settings,
                                CnnTrainReport* report = nullptr);

// Pair scorer with a symmetric raw-score cache: (a, b) and (b, a) are
// computed once, in canonical id order. One alignment serves both the
// deformation and CNN scores. Thread-safe.
class MatchEngine {
 public:
  explicit MatchEngine(MatchSettings settings, std::optional<PrimedCnnModel> model = std::nullopt);

  const MatchSettings& settings() const { return settings_; }
  // Cached raw scores stay valid; must not race with rank().
  void set_cascade(CascadeConfig cascade);

  void add_features(const std::string& image_id, ImageFeatures features);
  bool has_features(const std::string& image_id) const;
  const ImageFeatures& features(const std::string& image_id) const;

  double raw(Method m, const std::string& a, const std::string& b);

  RankedList rank(const std::string& query, const std::vector<std::string>& pool, const EnsembleWeights& weights,
                  CascadeStats* stats = nullptr, CascadeDebug* debug = nullptr);

  std::int64_t alignments() const;

 private:
  using Key = std::pair<std::string, std::string>;
  struct Deform {
    double deformation = 0.0;
    double cnn = 0.0;
  };

  MatchSettings settings_;
  std::optional<PrimedCnnModel> model_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<const ImageFeatures>> features_;
  std::map<Key, double> cosine_;
  std::map<Key, double> ransac_;
  std::map<Key, Deform> deform_;
  std::int64_t alignments_ = 0;
};

// Re-ranks a stored ranking from its recorded raw scores.
RankedList rerank_from_debug(const std::string& query, const nlohmann::json& debug, const CascadeConfig& cascade,
                             const EnsembleWeights& weights);

nlohmann::json to_json(const CascadeDebug& debug, const CascadeStats& stats);

inline std::string model_doc_name(const std::string& workflow) { return "model:primed_cnn:" + workflow; }

struct IpeStats {
  std::map<std::string, std::int64_t> steps;  // step -> items committed
  std::int64_t expensive_calls = 0;
  std::int64_t conflicts = 0;
};

// Image Processing Engine worker: polls the DEI, runs the machine steps it
// is allowed to run and commits the transitions.
class IpeWorker {
 public:
  explicit IpeWorker(dei::DeiApi& api, std::size_t batch = 8);

  // Supply an engine up front instead of building one from the workflow.
  void set_engine(const std::string& workflow, std::shared_ptr<MatchEngine> engine);

  // Items handled this round; 0 means nothing was available.
  std::size_t run_once();
  // Until a poll comes back empty.
  std::size_t run_until_idle();

  const IpeStats& stats() const { return stats_; }

 private:
  void process(const dei::WorkItem& item);
  MatchEngine& engine(const std::string& workflow);
  const ImageFeatures& load_features(MatchEngine& engine, const dei::ImageRecord& rec);

  dei::DeiApi& api_;
  std::size_t batch_;
  std::map<std::string, std::shared_ptr<MatchEngine>> engines_;
  IpeStats stats_;
};

}  // namespace sloop

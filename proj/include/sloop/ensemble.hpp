#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/pair_score.hpp"
#include "sloop/ranking.hpp"

namespace sloop {

inline constexpr double kWeightFloor = 1e-6;

// Method weights on the simplex, every entry >= kWeightFloor.
struct EnsembleWeights {
  std::map<Method, double> w;

  double at(Method m) const;
  double sum() const;

  static EnsembleWeights uniform(const std::vector<Method>& methods);
};

nlohmann::json to_json(const EnsembleWeights& w);
EnsembleWeights weights_from_json(const nlohmann::json& j);

struct CascadeStage {
  std::vector<Method> methods;
  double rho = 1.0;  // fraction of the pool that survives this stage
};

struct CascadeConfig {
  std::vector<CascadeStage> stages;

  // Throws validation_error unless rho strictly decreases until the final
  // stage, which keeps rho = 1.
  void validate() const;
  std::vector<Method> methods() const;

  static CascadeConfig exhaustive(const std::vector<Method>& methods);
};

CascadeConfig cascade_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CascadeConfig& c);

// Rank normalization: (rank from bottom - 1) / (n - 1), ties share the mean
// rank. Needs n >= 2.
std::vector<double> normalize_scores(const std::vector<double>& raw);

// Weighted mean over the methods present in `normalized`; the weights of
// those methods are renormalized. Throws on method or length mismatch.
std::vector<double> aggregate(const std::map<Method, std::vector<double>>& normalized,
                              const EnsembleWeights& weights);

// Raw score of the query against pool[candidate] under a method.
using PairScorer = std::function<double(Method, std::size_t candidate)>;

struct CascadeStats {
  std::map<Method, std::int64_t> calls;
  std::int64_t expensive_calls = 0;
  std::vector<std::size_t> stage_sizes;  // candidates scored at each stage
};

nlohmann::json to_json(const CascadeStats& s);

struct CascadeDebug {
  std::map<std::string, std::map<Method, double>> raw;         // candidate -> method -> raw
  std::map<std::string, std::map<Method, double>> normalized;  // final normalization of each candidate
};

// Scores the whole pool with stage 0, then each later stage scores only the
// top ceil(rho * |pool|) survivors of the previous one. Survivor scores sit
// above every dropped candidate: score = (tier + combined) / n_stages.
RankedList cascade_match(const std::string& query_id, const std::vector<std::string>& pool,
                         const PairScorer& scorer, const CascadeConfig& config, const EnsembleWeights& weights,
                         CascadeStats* stats = nullptr, CascadeDebug* debug = nullptr);

// Same candidate ordering as cascade_match with every stage at rho = 1.
RankedList exhaustive_match(const std::string& query_id, const std::vector<std::string>& pool,
                            const PairScorer& scorer, const std::vector<Method>& methods,
                            const EnsembleWeights& weights, CascadeStats* stats = nullptr);

struct VerifiedPair {
  bool same = false;
  std::map<Method, double> normalized;
};

struct WeightUpdate {
  EnsembleWeights weights;
  bool changed = false;
  std::string notice;
  std::map<Method, double> margins;
};

// Hedge update w_m <- w_m exp(eta * margin_m), margin = mean(same) -
// mean(different); back onto the simplex with the floor.
WeightUpdate update_weights(const EnsembleWeights& weights, const std::vector<VerifiedPair>& verified, double eta);

// Simplex projection that keeps every weight >= floor.
EnsembleWeights renormalize(std::map<Method, double> raw, double floor = kWeightFloor);

struct BagParams {
  int bags = 16;
  std::uint64_t seed = 0;
  double fraction = constants::kBagFraction;
};

// Mean base-method score over random fiducial subsets of size
// ceil(fraction * n). fraction >= 1 or n < 3 uses the full set.
double bagged_score(const ImageFeatures& a, const ImageFeatures& b, Method base, const BagParams& bag,
                    const MatcherParams& params = {});

}  // namespace sloop

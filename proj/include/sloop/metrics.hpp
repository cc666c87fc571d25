#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/ranking.hpp"

namespace sloop {

// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as 1/2.
double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// image id -> individual
using Truth = std::map<std::string, int>;

struct RecallReport {
  double recall = 0.0;
  int evaluated = 0;
  int excluded = 0;  // queries with no true mate in their pool
};

RecallReport recall_at_k(const std::vector<RankedList>& rankings, const Truth& truth, int k);

// cmc[k-1] = recall@k for k = 1..max pool size.
std::vector<double> cmc_curve(const std::vector<RankedList>& rankings, const Truth& truth,
                              int* excluded = nullptr);

// One line of metrics.csv.
struct MetricsRow {
  int iteration = 0;
  double auc = 0.0;
  double recall_at_1 = 0.0;
  double recall_at_5 = 0.0;
  std::int64_t pairs_verified = 0;
  std::int64_t expensive_calls = 0;
  std::int64_t conflicts = 0;
};

inline constexpr const char* kMetricsCsvHeader = "iteration,auc,recall@1,recall@5,pairs_verified,expensive_calls,conflicts";

std::string to_csv(const std::vector<MetricsRow>& rows);
nlohmann::json to_json(const MetricsRow& row);
MetricsRow metrics_row_from_json(const nlohmann::json& j);

// Pair AUC over every (query, candidate) entry of the rankings.
double ranking_auc(const std::vector<RankedList>& rankings, const Truth& truth);

}  // namespace sloop

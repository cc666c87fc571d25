#include "sloop/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "sloop/error.hpp"

namespace sloop {

double compute_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw validation_error("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based) midranks of the positives, doubled to stay integral.
  long double rank_sum_x2 = 0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t midrank_x2 = i + 1 + j;  // (i+1) + j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum_x2 += midrank_x2;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw validation_error("auc: need both positive and negative labels");
  const long double u = rank_sum_x2 / 2 - static_cast<long double>(positives) * (positives + 1) / 2;
  return static_cast<double>(u / (static_cast<long double>(positives) * negatives));
}

namespace {

// Rank (0-based) of the first true mate, or -1 when the pool holds none.
int first_mate_rank(const RankedList& list, const Truth& truth) {
  const auto q = truth.find(list.query_id);
  if (q == truth.end()) return -1;
  for (std::size_t r = 0; r < list.items.size(); ++r) {
    const auto c = truth.find(list.items[r].candidate_id);
    if (c != truth.end() && c->second == q->second) return static_cast<int>(r);
  }
  return -1;
}

}  // namespace

RecallReport recall_at_k(const std::vector<RankedList>& rankings, const Truth& truth, int k) {
  RecallReport rep;
  int hits = 0;
  for (const auto& list : rankings) {
    const int r = first_mate_rank(list, truth);
    if (r < 0) {
      ++rep.excluded;
      continue;
    }
    ++rep.evaluated;
    if (r < k) ++hits;
  }
  rep.recall = rep.evaluated ? static_cast<double>(hits) / rep.evaluated : 0.0;
  return rep;
}

std::vector<double> cmc_curve(const std::vector<RankedList>& rankings, const Truth& truth, int* excluded) {
  std::size_t pool = 0;
  for (const auto& l : rankings) pool = std::max(pool, l.items.size());
  std::vector<int> first(pool, 0);
  int evaluated = 0, skipped = 0;
  for (const auto& list : rankings) {
    const int r = first_mate_rank(list, truth);
    if (r < 0) {
      ++skipped;
      continue;
    }
    ++evaluated;
    ++first[r];
  }
  std::vector<double> cmc(pool, 0.0);
  int cum = 0;
  for (std::size_t k = 0; k < pool; ++k) {
    cum += first[k];
    cmc[k] = evaluated ? static_cast<double>(cum) / evaluated : 0.0;
  }
  if (excluded) *excluded = skipped;
  return cmc;
}

std::string to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%lld,%lld,%lld\n", r.iteration, r.auc, r.recall_at_1,
                  r.recall_at_5, static_cast<long long>(r.pairs_verified), static_cast<long long>(r.expensive_calls),
                  static_cast<long long>(r.conflicts));
    out += buf;
  }
  return out;
}

nlohmann::json to_json(const MetricsRow& r) {
  return {{"iteration", r.iteration},         {"auc", r.auc},
          {"recall@1", r.recall_at_1},        {"recall@5", r.recall_at_5},
          {"pairs_verified", r.pairs_verified}, {"expensive_calls", r.expensive_calls},
          {"conflicts", r.conflicts}};
}

MetricsRow metrics_row_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.iteration = j.at("iteration").get<int>();
  r.auc = j.at("auc").get<double>();
  r.recall_at_1 = j.at("recall@1").get<double>();
  r.recall_at_5 = j.at("recall@5").get<double>();
  r.pairs_verified = j.at("pairs_verified").get<std::int64_t>();
  r.expensive_calls = j.at("expensive_calls").get<std::int64_t>();
  r.conflicts = j.at("conflicts").get<std::int64_t>();
  return r;
}

double ranking_auc(const std::vector<RankedList>& rankings, const Truth& truth) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& list : rankings) {
    const auto q = truth.find(list.query_id);
    if (q == truth.end()) continue;
    for (const auto& c : list.items) {
      const auto t = truth.find(c.candidate_id);
      if (t == truth.end()) continue;
      scores.push_back(c.score);
      labels.push_back(q->second == t->second ? 1 : 0);
    }
  }
  return compute_auc(scores, labels);
}

}  // namespace sloop

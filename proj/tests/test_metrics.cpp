#include <doctest.h>

#include "sloop/error.hpp"
#include "sloop/metrics.hpp"
#include "sloop/rng.hpp"

using namespace sloop;

namespace {

double brute_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!l[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j]) continue;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      pairs += 1;
    }
  }
  return wins / pairs;
}

// Rankings over a small seeded population with a shuffled pool per query.
std::vector<RankedList> seeded_rankings(Rng& rng, Truth& truth) {
  const int ids = 3 + static_cast<int>(rng.below(6));
  const int n = ids * 2 + static_cast<int>(rng.below(5));
  truth.clear();
  for (int i = 0; i < n; ++i) truth["i" + std::to_string(i)] = static_cast<int>(rng.below(ids));
  std::vector<RankedList> out;
  for (const auto& [q, _] : truth) {
    RankedList l{q, {}};
    for (const auto& [c, __] : truth) {
      if (c != q && rng.bernoulli(0.8)) l.items.push_back({c, rng.uniform(), 0});
    }
    rng.shuffle(l.items);
    out.push_back(l);
  }
  return out;
}

int scan_rank(const RankedList& l, const Truth& t) {
  for (std::size_t r = 0; r < l.items.size(); ++r) {
    if (t.at(l.items[r].candidate_id) == t.at(l.query_id)) return static_cast<int>(r);
  }
  return -1;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("auc trivial cases") {
    CHECK(compute_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
    CHECK(compute_auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == 0.5);
    CHECK(compute_auc({0.9, 0.1}, {0, 1}) == 0.0);
    CHECK_THROWS_AS(compute_auc({0.1, 0.2}, {1, 1}), Error);
    CHECK_THROWS_AS(compute_auc({0.1}, {1, 0}), Error);
  }

  TEST_CASE("auc equals brute-force pair counting on seeded sets") {
    Rng rng(2024);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + rng.below(60);
      std::vector<double> s(n);
      std::vector<int> l(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.below(10)) / 10.0;  // many ties
        l[i] = rng.bernoulli(0.4);
      }
      l[0] = 1;
      l[1] = 0;
      CHECK(std::abs(compute_auc(s, l) - brute_auc(s, l)) <= 1e-12);
    }
  }

  TEST_CASE("recall@k and cmc equal a direct scan") {
    Rng rng(77);
    for (int t = 0; t < 100; ++t) {
      Truth truth;
      const auto rankings = seeded_rankings(rng, truth);
      int excluded = 0;
      const auto cmc = cmc_curve(rankings, truth, &excluded);
      int scan_excluded = 0;
      std::vector<int> ranks;
      for (const auto& l : rankings) {
        const int r = scan_rank(l, truth);
        if (r < 0) {
          ++scan_excluded;
        } else {
          ranks.push_back(r);
        }
      }
      CHECK(excluded == scan_excluded);
      for (int k = 1; k <= static_cast<int>(cmc.size()); ++k) {
        int hits = 0;
        for (int r : ranks) hits += r < k;
        const double expect = ranks.empty() ? 0.0 : static_cast<double>(hits) / ranks.size();
        CHECK(recall_at_k(rankings, truth, k).recall == doctest::Approx(expect).epsilon(1e-15));
        CHECK(cmc[k - 1] == doctest::Approx(expect).epsilon(1e-15));
        if (k > 1) CHECK(cmc[k - 1] >= cmc[k - 2]);
      }
      if (!ranks.empty()) CHECK(cmc.back() == 1.0);
    }
  }

  TEST_CASE("mate first gives recall@1 of one") {
    Truth truth{{"a", 1}, {"b", 1}, {"c", 2}, {"d", 2}};
    std::vector<RankedList> r = {{"a", {{"b", 0.9, 0}, {"c", 0.1, 0}}}, {"c", {{"d", 0.9, 0}, {"a", 0.1, 0}}}};
    CHECK(recall_at_k(r, truth, 1).recall == 1.0);
    CHECK(ranking_auc(r, truth) == 1.0);
  }

  TEST_CASE("metrics csv and json") {
    MetricsRow row{1, 0.5, 0.25, 0.75, 3, 40, 0};
    const auto csv = to_csv({row});
    CHECK(csv == std::string(kMetricsCsvHeader) + "\n1,0.500000,0.250000,0.750000,3,40,0\n");
    const auto back = metrics_row_from_json(to_json(row));
    CHECK(back.expensive_calls == 40);
    CHECK(back.recall_at_5 == 0.75);
  }
}

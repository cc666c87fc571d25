#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sloop/ensemble.hpp"
#include "sloop/error.hpp"
#include "sloop/rng.hpp"

using namespace sloop;

namespace {

std::vector<std::string> pool_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("p" + std::to_string(1000 + i));
  return ids;
}

// Random raw-score table indexed by method and candidate.
std::map<Method, std::vector<double>> score_table(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::map<Method, std::vector<double>> t;
  for (Method m : {Method::descriptor_cosine, Method::ransac, Method::deformation}) {
    for (std::size_t i = 0; i < n; ++i) t[m].push_back(std::round(rng.uniform() * 50) / 50);
  }
  return t;
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("rank normalization with ties") {
    const auto r = normalize_scores({0.3, 0.9, 0.3, 0.1});
    CHECK(r[3] == 0.0);
    CHECK(r[1] == 1.0);
    CHECK(r[0] == doctest::Approx(0.5));
    CHECK(r[2] == doctest::Approx(0.5));
    const auto flat = normalize_scores({2.0, 2.0, 2.0});
    for (double v : flat) CHECK(v == doctest::Approx(0.5));
    CHECK_THROWS_AS(normalize_scores({1.0}), Error);
  }

  TEST_CASE("rank normalization is invariant to monotone transforms") {
    Rng rng(2);
    std::vector<double> raw(40), squashed(40);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i] = rng.normal();
      squashed[i] = std::tanh(3 * raw[i]) + 7;
    }
    CHECK(normalize_scores(raw) == normalize_scores(squashed));
  }

  TEST_CASE("aggregate is the renormalized weighted mean") {
    EnsembleWeights w;
    w.w = {{Method::descriptor_cosine, 0.2}, {Method::ransac, 0.6}, {Method::deformation, 0.2}};
    const std::map<Method, std::vector<double>> n = {{Method::descriptor_cosine, {1.0, 0.0}},
                                                     {Method::ransac, {0.0, 1.0}}};
    const auto s = aggregate(n, w);
    CHECK(s[0] == doctest::Approx(0.25));
    CHECK(s[1] == doctest::Approx(0.75));
    const std::map<Method, std::vector<double>> bad = {{Method::descriptor_cosine, {1.0, 0.0}},
                                                       {Method::ransac, {0.0}}};
    CHECK_THROWS_AS(aggregate(bad, w), Error);
    CHECK_THROWS_AS(aggregate({{Method::primed_cnn, {0.0, 1.0}}}, w), Error);
  }

  TEST_CASE("cascade validation") {
    CascadeConfig c;
    c.stages = {{{Method::descriptor_cosine}, 0.2}, {{Method::ransac}, 1.0}};
    CHECK_NOTHROW(c.validate());
    c.stages = {{{Method::descriptor_cosine}, 0.5}, {{Method::ransac}, 0.6}};
    CHECK_THROWS_AS(c.validate(), Error);
    c.stages = {{{Method::descriptor_cosine}, 0.2}, {{Method::ransac}, 0.5}, {{Method::deformation}, 1.0}};
    CHECK_THROWS_AS(c.validate(), Error);
    c.stages = {};
    CHECK_THROWS_AS(c.validate(), Error);
    c.stages = {{{}, 1.0}};
    CHECK_THROWS_AS(c.validate(), Error);
    const auto j = to_json(CascadeConfig::exhaustive({Method::ransac, Method::deformation}));
    CHECK(cascade_from_json(j).methods() == std::vector<Method>{Method::ransac, Method::deformation});
  }

  TEST_CASE("exhaustive match equals a full sort of aggregated scores") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto ids = pool_ids(30);
      const auto table = score_table(ids.size(), seed);
      const auto methods = std::vector<Method>{Method::descriptor_cosine, Method::ransac, Method::deformation};
      const auto w = EnsembleWeights::uniform(methods);
      const auto list =
          exhaustive_match("q", ids, [&](Method m, std::size_t i) { return table.at(m)[i]; }, methods, w);

      std::map<Method, std::vector<double>> norm;
      for (const auto& [m, v] : table) norm[m] = normalize_scores(v);
      const auto agg = aggregate(norm, w);
      std::vector<std::size_t> order(ids.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (agg[a] != agg[b]) return agg[a] > agg[b];
        return ids[a] < ids[b];
      });
      REQUIRE(list.items.size() == ids.size());
      for (std::size_t k = 0; k < order.size(); ++k) {
        CHECK(list.items[k].candidate_id == ids[order[k]]);
        CHECK(list.items[k].score == doctest::Approx(agg[order[k]]));
      }
    }
  }

  TEST_CASE("cascade spends the expensive budget exactly and ranks survivors first") {
    const auto ids = pool_ids(50);
    const auto table = score_table(ids.size(), 9);
    CascadeConfig c;
    c.stages = {{{Method::descriptor_cosine}, 0.2}, {{Method::ransac, Method::deformation}, 1.0}};
    const auto w = EnsembleWeights::uniform(c.methods());
    CascadeStats stats;
    CascadeDebug debug;
    const auto list = cascade_match("q", ids, [&](Method m, std::size_t i) { return table.at(m)[i]; }, c, w,
                                    &stats, &debug);
    CHECK(stats.calls[Method::descriptor_cosine] == 50);
    CHECK(stats.calls[Method::ransac] == 10);
    CHECK(stats.calls[Method::deformation] == 10);
    CHECK(stats.expensive_calls == 10);  // ransac counts as cheap
    CHECK(stats.stage_sizes == std::vector<std::size_t>{50, 10});
    REQUIRE(list.items.size() == 50);
    for (std::size_t k = 0; k < 10; ++k) CHECK(list.items[k].tier == 1);
    for (std::size_t k = 10; k < 50; ++k) CHECK(list.items[k].tier == 0);
    for (std::size_t k = 1; k < 50; ++k) CHECK(list.items[k - 1].score >= list.items[k].score);
    // The survivors are the stage-0 top 10.
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    const auto n0 = normalize_scores(table.at(Method::descriptor_cosine));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (n0[a] != n0[b]) return n0[a] > n0[b];
      return ids[a] < ids[b];
    });
    std::set<std::string> expected, got;
    for (std::size_t k = 0; k < 10; ++k) {
      expected.insert(ids[order[k]]);
      got.insert(list.items[k].candidate_id);
    }
    CHECK(expected == got);
    CHECK(debug.raw.size() == 50);
    CHECK(debug.raw.at(list.items[0].candidate_id).size() == 3);
  }

  TEST_CASE("cascade with every rho at one matches exhaustive ordering") {
    const auto ids = pool_ids(25);
    const auto table = score_table(ids.size(), 4);
    const std::vector<Method> methods = {Method::descriptor_cosine, Method::ransac};
    const auto w = EnsembleWeights::uniform(methods);
    auto scorer = [&](Method m, std::size_t i) { return table.at(m)[i]; };
    const auto a = cascade_match("q", ids, scorer, CascadeConfig::exhaustive(methods), w);
    const auto b = exhaustive_match("q", ids, scorer, methods, w);
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t k = 0; k < a.items.size(); ++k) CHECK(a.items[k].candidate_id == b.items[k].candidate_id);
  }

  TEST_CASE("weight update follows the margin and keeps the simplex") {
    const auto w0 = EnsembleWeights::uniform({Method::descriptor_cosine, Method::ransac, Method::deformation});
    std::vector<VerifiedPair> v = {
        {true, {{Method::descriptor_cosine, 0.9}, {Method::ransac, 0.5}, {Method::deformation, 0.2}}},
        {false, {{Method::descriptor_cosine, 0.1}, {Method::ransac, 0.5}, {Method::deformation, 0.8}}},
    };
    const auto u = update_weights(w0, v, 1.0);
    CHECK(u.changed);
    CHECK(u.margins.at(Method::descriptor_cosine) == doctest::Approx(0.8));
    CHECK(u.margins.at(Method::ransac) == doctest::Approx(0.0));
    CHECK(u.margins.at(Method::deformation) == doctest::Approx(-0.6));
    CHECK(u.weights.sum() == doctest::Approx(1.0));
    CHECK(u.weights.at(Method::descriptor_cosine) > u.weights.at(Method::ransac));
    CHECK(u.weights.at(Method::ransac) > u.weights.at(Method::deformation));
    // Hedge closed form.
    const double z = std::exp(0.8) + 1.0 + std::exp(-0.6);
    CHECK(u.weights.at(Method::descriptor_cosine) == doctest::Approx(std::exp(0.8) / z));

    const auto same_only = update_weights(w0, {v[0]}, 1.0);
    CHECK_FALSE(same_only.changed);
    CHECK_FALSE(same_only.notice.empty());
    CHECK(same_only.weights.w == w0.w);
    CHECK_FALSE(update_weights(w0, {}, 1.0).changed);
  }

  TEST_CASE("renormalize keeps the floor") {
    const auto w = renormalize({{Method::descriptor_cosine, 1.0}, {Method::ransac, 0.0}, {Method::deformation, 1e-30}},
                               1e-3);
    CHECK(w.sum() == doctest::Approx(1.0));
    for (const auto& [m, v] : w.w) CHECK(v >= 1e-3);
    CHECK(w.at(Method::descriptor_cosine) == doctest::Approx(1.0 - 2e-3));
  }

  TEST_CASE("weights survive a json round trip") {
    EnsembleWeights w;
    w.w = {{Method::descriptor_cosine, 0.5}, {Method::primed_cnn, 0.5}};
    CHECK(weights_from_json(to_json(w)).w == w.w);
    CHECK_THROWS_AS(weights_from_json(nlohmann::json{{"bogus", 1.0}}), Error);
  }
}

#include "sloop/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "sloop/error.hpp"
#include "sloop/log.hpp"
#include "sloop/rng.hpp"

namespace sloop {

double EnsembleWeights::at(Method m) const {
  const auto it = w.find(m);
  if (it == w.end()) throw validation_error(std::string("no weight for method ") + to_string(m));
  return it->second;
}

double EnsembleWeights::sum() const {
  double s = 0.0;
  for (const auto& [m, x] : w) s += x;
  return s;
}

EnsembleWeights EnsembleWeights::uniform(const std::vector<Method>& methods) {
  EnsembleWeights out;
  for (Method m : methods) out.w[m] = 1.0;
  for (auto& [m, x] : out.w) x = 1.0 / static_cast<double>(out.w.size());
  return out;
}

nlohmann::json to_json(const EnsembleWeights& w) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [m, x] : w.w) j[to_string(m)] = x;
  return j;
}

EnsembleWeights weights_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) throw validation_error("weights: expected a non-empty method -> weight map");
  std::map<Method, double> raw;
  for (const auto& [k, v] : j.items()) {
    const double x = v.get<double>();
    if (!(x >= 0.0) || !std::isfinite(x)) throw validation_error("weights: negative or non-finite weight for " + k);
    raw[method_from_string(k)] = x;
  }
  return renormalize(raw);
}

void CascadeConfig::validate() const {
  if (stages.empty()) throw validation_error("cascade: no stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.methods.empty()) throw validation_error("cascade: stage " + std::to_string(i) + " has no methods");
    if (!(s.rho > 0.0 && s.rho <= 1.0)) throw validation_error("cascade: rho must lie in (0, 1]");
    if (i > 0 && i + 1 < stages.size() && !(s.rho < stages[i - 1].rho)) {
      throw validation_error("cascade: rho must strictly decrease until the final stage");
    }
  }
  if (stages.back().rho != 1.0) throw validation_error("cascade: final stage must keep rho = 1");
  if (stages.size() > 1) {
    for (Method m : stages.front().methods) {
      if (is_expensive(m)) {
        throw validation_error(std::string("cascade: first stage must be cheap, got ") + to_string(m));
      }
    }
  }
  std::set<Method> seen;
  for (Method m : methods()) {
    if (!seen.insert(m).second) throw validation_error(std::string("cascade: method repeated: ") + to_string(m));
  }
}

std::vector<Method> CascadeConfig::methods() const {
  std::vector<Method> out;
  for (const auto& s : stages) out.insert(out.end(), s.methods.begin(), s.methods.end());
  return out;
}

CascadeConfig CascadeConfig::exhaustive(const std::vector<Method>& methods) {
  return CascadeConfig{{CascadeStage{methods, 1.0}}};
}

CascadeConfig cascade_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw validation_error("cascade: expected a list of stages");
  CascadeConfig c;
  for (const auto& s : j) {
    CascadeStage stage;
    if (!s.contains("methods")) throw validation_error("cascade: stage without methods");
    const auto& ms = s.at("methods");
    if (ms.is_string()) {
      stage.methods.push_back(method_from_string(ms.get<std::string>()));
    } else {
      for (const auto& m : ms) stage.methods.push_back(method_from_string(m.get<std::string>()));
    }
    stage.rho = s.value("rho", 1.0);
    c.stages.push_back(stage);
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const CascadeConfig& c) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : c.stages) {
    nlohmann::json ms = nlohmann::json::array();
    for (Method m : s.methods) ms.push_back(to_string(m));
    j.push_back({{"methods", ms}, {"rho", s.rho}});
  }
  return j;
}

std::vector<double> normalize_scores(const std::vector<double>& raw) {
  const std::size_t n = raw.size();
  if (n < 2) throw validation_error("normalize_scores: need at least 2 candidates");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return raw[a] < raw[b]; });
  std::vector<double> out(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && raw[order[j + 1]] == raw[order[i]]) ++j;
    // ranks i+1 .. j+1 share their mean
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = (rank - 1.0) / static_cast<double>(n - 1);
    i = j + 1;
  }
  return out;
}

std::vector<double> aggregate(const std::map<Method, std::vector<double>>& normalized,
                              const EnsembleWeights& weights) {
  if (normalized.empty()) throw validation_error("aggregate: no methods");
  const std::size_t n = normalized.begin()->second.size();
  double total = 0.0;
  for (const auto& [m, s] : normalized) {
    if (s.size() != n) throw validation_error("aggregate: candidate sets differ between methods");
    total += weights.at(m);
  }
  if (!(total > 0.0)) throw validation_error("aggregate: weights of the scored methods sum to zero");
  std::vector<double> out(n, 0.0);
  for (const auto& [m, s] : normalized) {
    const double w = weights.at(m) / total;
    for (std::size_t i = 0; i < n; ++i) out[i] += w * s[i];
  }
  for (double& x : out) x = std::clamp(x, 0.0, 1.0);
  return out;
}

nlohmann::json to_json(const CascadeStats& s) {
  nlohmann::json calls = nlohmann::json::object();
  for (const auto& [m, c] : s.calls) calls[to_string(m)] = c;
  return {{"calls", calls}, {"expensive_calls", s.expensive_calls}, {"stage_sizes", s.stage_sizes}};
}

namespace {

std::size_t survivors(double rho, std::size_t n) {
  const auto k = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

}  // namespace

RankedList cascade_match(const std::string& query_id, const std::vector<std::string>& pool,
                         const PairScorer& scorer, const CascadeConfig& config, const EnsembleWeights& weights,
                         CascadeStats* stats, CascadeDebug* debug) {
  config.validate();
  RankedList out{query_id, {}};
  const std::size_t n = pool.size();
  if (n == 0) return out;
  const int n_stages = static_cast<int>(config.stages.size());

  std::map<Method, std::vector<double>> raw;
  std::vector<Method> scored_methods;
  std::vector<std::size_t> active(n);
  std::iota(active.begin(), active.end(), 0);
  std::vector<RankedCandidate> ranked;
  ranked.reserve(n);

  for (int s = 0; s < n_stages; ++s) {
    const auto& stage = config.stages[s];
    if (stats) stats->stage_sizes.push_back(active.size());
    for (Method m : stage.methods) {
      auto& r = raw[m];
      r.assign(n, 0.0);
      for (std::size_t c : active) r[c] = scorer(m, c);
      if (stats) {
        stats->calls[m] += static_cast<std::int64_t>(active.size());
        if (is_expensive(m)) stats->expensive_calls += static_cast<std::int64_t>(active.size());
      }
      scored_methods.push_back(m);
    }

    std::map<Method, std::vector<double>> norm;
    for (Method m : scored_methods) {
      std::vector<double> v;
      v.reserve(active.size());
      for (std::size_t c : active) v.push_back(raw[m][c]);
      norm[m] = active.size() >= 2 ? normalize_scores(v) : std::vector<double>(1, 0.5);
    }
    const auto combined = aggregate(norm, weights);

    std::vector<std::size_t> order(active.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (combined[a] != combined[b]) return combined[a] > combined[b];
      return pool[active[a]] < pool[active[b]];
    });

    const std::size_t keep = s + 1 < n_stages ? std::min(active.size(), survivors(stage.rho, n)) : 0;
    std::vector<std::size_t> next;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t c = active[order[k]];
      if (k < keep) {
        next.push_back(c);
        continue;
      }
      ranked.push_back({pool[c], (static_cast<double>(s) + combined[order[k]]) / n_stages, s});
      if (debug) {
        for (const auto& [m, v] : norm) {
          debug->raw[pool[c]][m] = raw[m][c];
          debug->normalized[pool[c]][m] = v[order[k]];
        }
      }
    }
    active = std::move(next);
    if (active.empty()) break;
  }

  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.tier != b.tier) return a.tier > b.tier;
    return a.score > b.score;
  });
  out.items = std::move(ranked);
  return out;
}

RankedList exhaustive_match(const std::string& query_id, const std::vector<std::string>& pool,
                            const PairScorer& scorer, const std::vector<Method>& methods,
                            const EnsembleWeights& weights, CascadeStats* stats) {
  return cascade_match(query_id, pool, scorer, CascadeConfig::exhaustive(methods), weights, stats);
}

EnsembleWeights renormalize(std::map<Method, double> raw, double floor) {
  if (raw.empty()) throw validation_error("weights: empty");
  const double k = static_cast<double>(raw.size());
  if (floor * k > 1.0) throw validation_error("weights: floor too large for the number of methods");
  std::set<Method> pinned;
  EnsembleWeights out;
  for (;;) {
    double free_mass = 1.0 - floor * static_cast<double>(pinned.size());
    double free_raw = 0.0;
    for (const auto& [m, x] : raw) {
      if (!pinned.count(m)) free_raw += std::max(x, 0.0);
    }
    bool changed = false;
    for (const auto& [m, x] : raw) {
      if (pinned.count(m)) {
        out.w[m] = floor;
        continue;
      }
      const double v = free_raw > 0.0 ? free_mass * std::max(x, 0.0) / free_raw
                                      : free_mass / (k - static_cast<double>(pinned.size()));
      out.w[m] = v;
      if (v < floor) {
        pinned.insert(m);
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

WeightUpdate update_weights(const EnsembleWeights& weights, const std::vector<VerifiedPair>& verified, double eta) {
  if (!(eta >= 0.0)) throw validation_error("update_weights: eta must be >= 0");
  WeightUpdate out{weights, false, {}, {}};
  if (eta == 0.0 || verified.empty()) return out;
  std::map<Method, double> sum_same, sum_diff;
  std::size_t n_same = 0, n_diff = 0;
  for (const auto& p : verified) {
    (p.same ? n_same : n_diff) += 1;
    for (const auto& [m, w] : weights.w) {
      const auto it = p.normalized.find(m);
      if (it == p.normalized.end()) {
        throw validation_error(std::string("update_weights: verified pair lacks a score for ") + to_string(m));
      }
      (p.same ? sum_same : sum_diff)[m] += it->second;
    }
  }
  if (n_same == 0 || n_diff == 0) {
    out.notice = "verified pairs are all one class; margin undefined, weights unchanged";
    log_info(out.notice);
    return out;
  }
  std::map<Method, double> raw;
  for (const auto& [m, w] : weights.w) {
    const double margin = sum_same[m] / static_cast<double>(n_same) - sum_diff[m] / static_cast<double>(n_diff);
    out.margins[m] = margin;
    raw[m] = w * std::exp(eta * margin);
  }
  out.weights = renormalize(raw);
  out.changed = true;
  return out;
}

double bagged_score(const ImageFeatures& a, const ImageFeatures& b, Method base, const BagParams& bag,
                    const MatcherParams& params) {
  if (base == Method::primed_cnn) throw validation_error("bagged_score: primed_cnn is not a classical method");
  if (bag.bags < 1) throw validation_error("bagged_score: need at least one bag");
  const auto anchors = common_anchors(a, b);
  const std::size_t n = anchors.size();
  if (bag.fraction >= 1.0) return pair_score_classical(a, b, base, params);
  if (n < 3) {
    log_warn("bagged_score: fewer than 3 common fiducials, using the plain method");
    return pair_score_classical(a, b, base, params);
  }
  const auto k = static_cast<std::size_t>(std::ceil(bag.fraction * static_cast<double>(n) - 1e-9));
  double total = 0.0;
  for (int i = 0; i < bag.bags; ++i) {
    Rng rng(derive_seed(bag.seed, 0xBA6, static_cast<std::uint64_t>(i)));
    const auto idx = rng.sample_indices(n, k);
    std::vector<int> subset;
    for (std::size_t j : idx) subset.push_back(anchors[j]);
    std::sort(subset.begin(), subset.end());
    total += pair_score_classical(select_anchors(a, subset), select_anchors(b, subset), base, params);
  }
  return total / bag.bags;
}

}  // namespace sloop

#include <algorithm>
#include <cmath>

#include "sloop/error.hpp"
#include "sloop/log.hpp"
#include "sloop/pipeline.hpp"
#include "sloop/rng.hpp"

namespace sloop {

bool MatchSettings::needs_cnn() const {
  const auto ms = cascade.methods();
  return std::find(ms.begin(), ms.end(), Method::primed_cnn) != ms.end();
}

MatchSettings match_settings_from_workflow(const WorkflowDef& def) {
  const auto& p = def.params;
  MatchSettings s;
  if (p.contains("features")) {
    s.features.patch_half_width = p["features"].value("patch_half_width", s.features.patch_half_width);
  }
  if (p.contains("alignment")) {
    const auto& a = p["alignment"];
    s.matcher.align.levels = a.value("levels", s.matcher.align.levels);
    s.matcher.align.iters = a.value("iters", s.matcher.align.iters);
    s.matcher.align.lambda = a.value("lambda", s.matcher.align.lambda);
  }
  if (p.contains("deformation")) {
    s.matcher.alpha = p["deformation"].value("alpha", s.matcher.alpha);
    s.matcher.beta = p["deformation"].value("beta", s.matcher.beta);
  }
  if (p.contains("ransac")) {
    const auto& r = p["ransac"];
    s.matcher.ransac.iters = r.value("iters", s.matcher.ransac.iters);
    s.matcher.ransac.inlier_tol_px = r.value("inlier_tol_px", s.matcher.ransac.inlier_tol_px);
    s.matcher.ransac.min_inliers = r.value("min_inliers", s.matcher.ransac.min_inliers);
    s.matcher.ransac.outer_rounds = r.value("outer_rounds", s.matcher.ransac.outer_rounds);
  }
  s.cascade = p.contains("cascade")
                  ? cascade_from_json(p["cascade"])
                  : CascadeConfig::exhaustive({Method::descriptor_cosine, Method::ransac, Method::deformation});
  s.weights = p.contains("weights") ? weights_from_json(p["weights"]) : EnsembleWeights::uniform(s.cascade.methods());
  for (const auto m : s.cascade.methods()) {
    if (!s.weights.w.count(m)) throw validation_error(std::string("workflow weights missing method ") + to_string(m));
  }
  s.eta = p.value("eta", s.eta);
  if (p.contains("primed_cnn")) {
    const auto& c = p["primed_cnn"];
    s.cnn.seed = c.value("training_seed", s.cnn.seed);
    s.cnn.individuals = c.value("training_individuals", s.cnn.individuals);
    s.cnn.epochs = c.value("epochs", s.cnn.epochs);
    s.cnn.lr = c.value("lr", s.cnn.lr);
    s.cnn.batch = c.value("batch", s.cnn.batch);
    s.cnn.negatives_per_positive = c.value("negatives_per_positive", s.cnn.negatives_per_positive);
  }
  if (p.contains("feedback")) s.feedback = feedback_config_from_json(p["feedback"]);
  s.feedback.eta = s.eta;
  return s;
}

std::vector<CnnExample> cnn_training_examples(const Population& pop, const MatchSettings& settings) {
  const auto& sights = pop.sightings;
  std::vector<ImageFeatures> feats;
  feats.reserve(sights.size());
  for (const auto& s : sights) feats.push_back(extract_image_features(to_grid(s.image), s.fiducials, settings.features));

  std::vector<std::pair<std::size_t, std::size_t>> pos, neg;
  for (std::size_t i = 0; i < sights.size(); ++i) {
    for (std::size_t j = i + 1; j < sights.size(); ++j) {
      (sights[i].individual == sights[j].individual ? pos : neg).emplace_back(i, j);
    }
  }
  Rng rng(pop.spec.seed ^ 0x9e3779b97f4a7c15ULL);
  rng.shuffle(neg);
  neg.resize(std::min(neg.size(), static_cast<std::size_t>(std::llround(settings.cnn.negatives_per_positive *
                                                                         static_cast<double>(pos.size())))));
  std::vector<CnnExample> out;
  auto add = [&](const std::vector<std::pair<std::size_t, std::size_t>>& pairs, int label) {
    for (const auto& [i, j] : pairs) {
      const auto d = align_pair(feats[i], feats[j], settings.matcher.align);
      for (const auto& fd : d.per_fiducial) out.push_back({make_cnn_input(fd.divergence.div_map, fd.error_map), label});
    }
  };
  add(pos, 1);
  add(neg, 0);
  return out;
}

PrimedCnnModel train_primed_cnn(const SyntheticSpec& base, const MatchSettings& settings, CnnTrainReport* report) {
  SyntheticSpec spec = base;
  spec.seed = settings.cnn.seed;
  spec.n_individuals = settings.cnn.individuals;
  const auto examples = cnn_training_examples(generate_population(spec), settings);
  if (examples.empty()) throw validation_error("primed CNN: no training examples");
  CnnHyper h;
  h.lr = settings.cnn.lr;
  h.epochs = settings.cnn.epochs;
  h.batch = settings.cnn.batch;
  h.seed = settings.cnn.seed;
  log_info("training primed CNN on " + std::to_string(examples.size()) + " examples");
  return primed_cnn_train(examples, h, report);
}

MatchEngine::MatchEngine(MatchSettings settings, std::optional<PrimedCnnModel> model)
    : settings_(std::move(settings)), model_(std::move(model)) {
  settings_.cascade.validate();
  if (settings_.needs_cnn() && !model_) throw validation_error("cascade uses primed_cnn but no model was supplied");
}

void MatchEngine::add_features(const std::string& image_id, ImageFeatures features) {
  auto p = std::make_shared<const ImageFeatures>(std::move(features));
  std::lock_guard lock(mu_);
  features_[image_id] = std::move(p);
}

bool MatchEngine::has_features(const std::string& image_id) const {
  std::lock_guard lock(mu_);
  return features_.count(image_id) > 0;
}

const ImageFeatures& MatchEngine::features(const std::string& image_id) const {
  std::lock_guard lock(mu_);
  const auto it = features_.find(image_id);
  if (it == features_.end()) throw not_found("no features loaded for " + image_id);
  return *it->second;
}

double MatchEngine::raw(Method m, const std::string& a, const std::string& b) {
  const Key key = a < b ? Key{a, b} : Key{b, a};
  {
    std::lock_guard lock(mu_);
    switch (m) {
      case Method::descriptor_cosine:
        if (auto it = cosine_.find(key); it != cosine_.end()) return it->second;
        break;
      case Method::ransac:
        if (auto it = ransac_.find(key); it != ransac_.end()) return it->second;
        break;
      case Method::deformation:
      case Method::primed_cnn:
        if (auto it = deform_.find(key); it != deform_.end()) {
          return m == Method::deformation ? it->second.deformation : it->second.cnn;
        }
        break;
    }
  }
  const auto& fa = features(key.first);
  const auto& fb = features(key.second);
  switch (m) {
    case Method::descriptor_cosine: {
      const double v = descriptor_cosine(fa, fb);
      std::lock_guard lock(mu_);
      return cosine_[key] = v;
    }
    case Method::ransac: {
      const double v = pair_score_classical(fa, fb, Method::ransac, settings_.matcher);
      std::lock_guard lock(mu_);
      return ransac_[key] = v;
    }
    case Method::deformation:
    case Method::primed_cnn: {
      const auto d = align_pair(fa, fb, settings_.matcher.align);
      Deform r;
      r.deformation = deformation_score(d, settings_.matcher.alpha, settings_.matcher.beta);
      if (model_) r.cnn = primed_cnn_score(*model_, d);
      std::lock_guard lock(mu_);
      ++alignments_;
      deform_[key] = r;
      return m == Method::deformation ? r.deformation : r.cnn;
    }
  }
  throw validation_error("unknown method");
}

void MatchEngine::set_cascade(CascadeConfig cascade) {
  cascade.validate();
  std::lock_guard lock(mu_);
  settings_.cascade = std::move(cascade);
}

RankedList MatchEngine::rank(const std::string& query, const std::vector<std::string>& pool,
                             const EnsembleWeights& weights, CascadeStats* stats, CascadeDebug* debug) {
  return cascade_match(
      query, pool, [&](Method m, std::size_t c) { return raw(m, query, pool[c]); }, settings_.cascade, weights,
      stats, debug);
}

std::int64_t MatchEngine::alignments() const {
  std::lock_guard lock(mu_);
  return alignments_;
}

nlohmann::json to_json(const CascadeDebug& debug, const CascadeStats& stats) {
  auto table = [](const std::map<std::string, std::map<Method, double>>& t) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [cand, ms] : t) {
      auto& e = j[cand];
      for (const auto& [m, v] : ms) e[to_string(m)] = v;
    }
    return j;
  };
  return {{"raw", table(debug.raw)}, {"normalized", table(debug.normalized)}, {"stats", to_json(stats)}};
}

RankedList rerank_from_debug(const std::string& query, const nlohmann::json& debug, const CascadeConfig& cascade,
                             const EnsembleWeights& weights) {
  if (!debug.contains("raw") || !debug.at("raw").is_object()) {
    throw validation_error("ranking for " + query + " has no recorded raw scores");
  }
  const auto& raw = debug.at("raw");
  std::vector<std::string> pool;
  for (const auto& [cand, _] : raw.items()) pool.push_back(cand);
  return cascade_match(
      query, pool,
      [&](Method m, std::size_t c) {
        const auto& e = raw.at(pool[c]);
        const auto it = e.find(to_string(m));
        if (it == e.end()) {
          throw validation_error("no recorded " + std::string(to_string(m)) + " score for " + query + "/" + pool[c]);
        }
        return it->get<double>();
      },
      cascade, weights);
}

}  // namespace sloop

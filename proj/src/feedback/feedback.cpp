#include "sloop/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sloop/error.hpp"
#include "sloop/log.hpp"

namespace sloop {

const char* to_string(Label l) {
  switch (l) {
    case Label::same: return "same";
    case Label::different: return "different";
    case Label::unsure: return "unsure";
  }
  return "?";
}

const char* to_string(TaskState s) {
  switch (s) {
    case TaskState::open: return "open";
    case TaskState::assigned: return "assigned";
    case TaskState::resolved: return "resolved";
    case TaskState::expired: return "expired";
  }
  return "?";
}

Label label_from_string(const std::string& s) {
  if (s == "same") return Label::same;
  if (s == "different") return Label::different;
  if (s == "unsure") return Label::unsure;
  throw validation_error("label must be same, different or unsure, got '" + s + "'");
}

TaskState task_state_from_string(const std::string& s) {
  for (TaskState t : {TaskState::open, TaskState::assigned, TaskState::resolved, TaskState::expired}) {
    if (s == to_string(t)) return t;
  }
  throw validation_error("unknown task state '" + s + "'");
}

ImagePair make_pair_key(const std::string& a, const std::string& b) {
  return a < b ? ImagePair{a, b} : ImagePair{b, a};
}

nlohmann::json to_json(const VerificationTask& t, bool include_truth) {
  nlohmann::json responses = nlohmann::json::array();
  for (const auto& r : t.responses) {
    responses.push_back({{"annotator", r.annotator_id}, {"label", to_string(r.label)}, {"timestamp", r.timestamp}});
  }
  nlohmann::json j = {{"task_id", t.task_id},
                      {"pair", {t.pair.first, t.pair.second}},
                      {"state", to_string(t.state)},
                      {"responses", responses},
                      {"consensus", t.consensus ? nlohmann::json(to_string(*t.consensus)) : nlohmann::json()},
                      {"gold", t.gold},
                      {"iteration", t.iteration},
                      {"round_start", t.round_start}};
  if (include_truth && t.truth) j["truth"] = to_string(*t.truth);
  return j;
}

VerificationTask task_from_json(const nlohmann::json& j) {
  VerificationTask t;
  t.task_id = j.at("task_id").get<std::string>();
  t.pair = make_pair_key(j.at("pair").at(0).get<std::string>(), j.at("pair").at(1).get<std::string>());
  t.state = task_state_from_string(j.at("state").get<std::string>());
  for (const auto& r : j.at("responses")) {
    t.responses.push_back({r.at("annotator").get<std::string>(), label_from_string(r.at("label").get<std::string>()),
                           r.value("timestamp", std::int64_t{0})});
  }
  if (j.contains("consensus") && j.at("consensus").is_string()) {
    t.consensus = label_from_string(j.at("consensus").get<std::string>());
  }
  t.gold = j.value("gold", false);
  if (j.contains("truth")) t.truth = label_from_string(j.at("truth").get<std::string>());
  t.iteration = j.value("iteration", 0);
  t.round_start = j.value("round_start", std::size_t{0});
  return t;
}

FeedbackConfig feedback_config_from_json(const nlohmann::json& j) {
  FeedbackConfig c;
  if (!j.is_object()) return c;
  c.budget_fraction = j.value("budget_fraction", c.budget_fraction);
  c.redundancy = j.value("redundancy", c.redundancy);
  c.consensus = j.value("consensus", c.consensus);
  c.gold_every = j.value("gold_every", c.gold_every);
  c.deactivate_below = j.value("deactivate_below", c.deactivate_below);
  c.min_gold = j.value("min_gold", c.min_gold);
  c.prior_a = j.value("prior_a", c.prior_a);
  c.prior_b = j.value("prior_b", c.prior_b);
  c.eta = j.value("eta", c.eta);
  if (c.redundancy < 1) throw validation_error("feedback: redundancy must be >= 1");
  if (!(c.consensus > 0.5 && c.consensus <= 1.0)) throw validation_error("feedback: consensus must be in (0.5, 1]");
  if (c.gold_every < 1) throw validation_error("feedback: gold_every must be >= 1");
  if (!(c.prior_a > 0 && c.prior_b > 0)) throw validation_error("feedback: Beta prior must be positive");
  if (!(c.budget_fraction >= 0.0 && c.budget_fraction <= 1.0)) {
    throw validation_error("feedback: budget_fraction must lie in [0, 1]");
  }
  return c;
}

nlohmann::json to_json(const FeedbackConfig& c) {
  return {{"budget_fraction", c.budget_fraction}, {"redundancy", c.redundancy}, {"consensus", c.consensus},
          {"gold_every", c.gold_every},           {"deactivate_below", c.deactivate_below},
          {"min_gold", c.min_gold},               {"prior_a", c.prior_a},
          {"prior_b", c.prior_b},                 {"eta", c.eta}};
}

nlohmann::json to_json(const AnnotatorProfile& p) {
  return {{"annotator_id", p.annotator_id}, {"a", p.a},
          {"b", p.b},                       {"reliability", p.reliability()},
          {"gold_correct", p.gold_correct}, {"gold_total", p.gold_total},
          {"active", p.active},             {"answered", p.answered},
          {"golds_seen", p.golds_seen}};
}

AnnotatorProfile profile_from_json(const nlohmann::json& j) {
  AnnotatorProfile p;
  p.annotator_id = j.at("annotator_id").get<std::string>();
  p.a = j.at("a").get<double>();
  p.b = j.at("b").get<double>();
  p.gold_correct = j.value("gold_correct", 0);
  p.gold_total = j.value("gold_total", 0);
  p.active = j.value("active", true);
  p.answered = j.value("answered", 0);
  p.golds_seen = j.value("golds_seen", 0);
  return p;
}

std::vector<ImagePair> select_verification_pairs(const std::vector<RankedList>& rankings, std::size_t pool_size,
                                                 double f, const std::set<ImagePair>& already_verified) {
  if (!(f > 0.0 && f <= 1.0)) throw validation_error("select_verification_pairs: f must lie in (0, 1]");
  if (rankings.empty()) throw validation_error("select_verification_pairs: no rankings");
  std::map<ImagePair, double> best;
  for (const auto& list : rankings) {
    for (const auto& c : list.items) {
      if (c.candidate_id == list.query_id) continue;
      const auto key = make_pair_key(list.query_id, c.candidate_id);
      if (already_verified.count(key)) continue;
      auto [it, inserted] = best.emplace(key, c.score);
      if (!inserted) it->second = std::max(it->second, c.score);
    }
  }
  std::vector<std::pair<ImagePair, double>> all(best.begin(), best.end());
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto budget = static_cast<std::size_t>(std::ceil(f * static_cast<double>(pool_size) - 1e-9));
  std::vector<ImagePair> out;
  for (std::size_t i = 0; i < all.size() && out.size() < budget; ++i) out.push_back(all[i].first);
  return out;
}

std::optional<Label> resolve(const VerificationTask& task, const std::map<std::string, AnnotatorProfile>& profiles,
                             const FeedbackConfig& config) {
  double w_same = 0.0, w_diff = 0.0;
  int votes = 0, total = 0;
  for (std::size_t i = task.round_start; i < task.responses.size(); ++i) {
    const auto& r = task.responses[i];
    ++total;
    if (r.label == Label::unsure) continue;
    const auto it = profiles.find(r.annotator_id);
    const double w = it != profiles.end() ? it->second.reliability() : config.prior_a / (config.prior_a + config.prior_b);
    (r.label == Label::same ? w_same : w_diff) += w;
    ++votes;
  }
  const double cast = w_same + w_diff;
  if (votes >= 2 && cast > 0.0) {
    const bool same_leads = w_same > w_diff;
    const double lead = same_leads ? w_same : w_diff;
    if (lead >= config.consensus * cast) return same_leads ? Label::same : Label::different;
  }
  if (total >= config.redundancy && votes >= 1) return w_same > w_diff ? Label::same : Label::different;
  return std::nullopt;
}

AnnotatorProfile update_reliability(AnnotatorProfile profile, bool correct, const FeedbackConfig& config) {
  (correct ? profile.a : profile.b) += 1.0;
  profile.gold_total += 1;
  if (correct) profile.gold_correct += 1;
  if (profile.reliability() < config.deactivate_below && profile.gold_total >= config.min_gold) {
    profile.active = false;
  }
  return profile;
}

TaskBoard::TaskBoard(FeedbackConfig config) : config_(config) {}

std::string TaskBoard::next_id(const char* prefix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06llu", prefix, static_cast<unsigned long long>(++counter_));
  return buf;
}

void TaskBoard::add_annotator(const std::string& id) {
  if (id.empty()) throw validation_error("annotator id must not be empty");
  if (profiles_.count(id)) return;
  AnnotatorProfile p;
  p.annotator_id = id;
  p.a = config_.prior_a;
  p.b = config_.prior_b;
  profiles_.emplace(id, p);
}

void TaskBoard::add_gold(const ImagePair& pair, Label truth) {
  if (truth == Label::unsure) throw validation_error("gold truth must be same or different");
  gold_pool_.emplace_back(make_pair_key(pair.first, pair.second), truth);
}

std::string TaskBoard::add_task(const ImagePair& raw, int iteration) {
  const auto pair = make_pair_key(raw.first, raw.second);
  if (pair.first == pair.second) throw validation_error("verification pair needs two distinct images");
  if (live_pair_.count(pair)) throw conflict("pair " + pair.first + "/" + pair.second + " already has a task");
  VerificationTask t;
  t.task_id = next_id("t");
  t.pair = pair;
  t.iteration = iteration;
  live_pair_[pair] = t.task_id;
  tasks_.emplace(t.task_id, t);
  return t.task_id;
}

bool TaskBoard::needs_response_from(const VerificationTask& t, const std::string& annotator) const {
  if (t.gold || (t.state != TaskState::open && t.state != TaskState::assigned)) return false;
  for (std::size_t i = t.round_start; i < t.responses.size(); ++i) {
    if (t.responses[i].annotator_id == annotator) return false;
  }
  return true;
}

std::vector<VerificationTask> TaskBoard::fetch(const std::string& annotator, std::size_t max) {
  add_annotator(annotator);
  auto& profile = profiles_.at(annotator);
  std::vector<VerificationTask> out;
  if (!profile.active || max == 0) return out;
  const auto k = static_cast<std::size_t>(config_.gold_every);
  auto& pending = pending_gold_[annotator];
  if (!gold_pool_.empty() && (static_cast<std::size_t>(profile.answered) + 1) % k == 0) {
    if (pending.empty()) {
      const auto& [pair, truth] = gold_pool_[static_cast<std::size_t>(profile.golds_seen) % gold_pool_.size()];
      VerificationTask g;
      g.task_id = next_id("g");
      g.pair = pair;
      g.gold = true;
      g.truth = truth;
      g.state = TaskState::assigned;
      tasks_.emplace(g.task_id, g);
      pending.insert(g.task_id);
    }
    auto t = tasks_.at(*pending.begin());
    t.truth.reset();
    out.push_back(t);
    return out;
  }
  // Never hand out more regular work than fits before the next gold slot.
  std::size_t room = max;
  if (!gold_pool_.empty()) room = std::min(room, (k - 1) - static_cast<std::size_t>(profile.answered) % k);
  for (auto& [id, t] : tasks_) {
    if (out.size() >= room) break;
    if (!needs_response_from(t, annotator)) continue;
    if (t.state == TaskState::open) t.state = TaskState::assigned;
    out.push_back(t);
  }
  return out;
}

SubmitResult TaskBoard::respond(const std::string& annotator, const std::string& task_id, Label label,
                                std::int64_t timestamp) {
  auto& t = mutable_task(task_id);
  add_annotator(annotator);
  auto& profile = profiles_.at(annotator);
  SubmitResult out;
  if (!profile.active) throw Error(ErrorCode::authorization, "annotator " + annotator + " is deactivated");
  if (t.gold) {
    auto& pending = pending_gold_[annotator];
    if (!pending.count(task_id)) {
      out.duplicate = true;
      return out;
    }
    pending.erase(task_id);
    t.responses.push_back({annotator, label, timestamp});
    t.state = TaskState::resolved;
    t.consensus = t.truth;
    profile.answered += 1;
    profile.golds_seen += 1;
    if (label != Label::unsure) profile = update_reliability(profile, label == *t.truth, config_);
    out.accepted = true;
    out.consensus = t.consensus;
    return out;
  }
  if (t.state == TaskState::resolved || t.state == TaskState::expired) {
    out.consensus = t.consensus;
    return out;
  }
  if (!needs_response_from(t, annotator)) {
    out.duplicate = true;
    return out;
  }
  t.responses.push_back({annotator, label, timestamp});
  profile.answered += 1;
  out.accepted = true;
  if (auto c = sloop::resolve(t, profiles_, config_)) {
    t.consensus = c;
    t.state = TaskState::resolved;
    out.consensus = c;
  } else if (t.responses.size() - t.round_start >= static_cast<std::size_t>(config_.redundancy)) {
    // Every response abstained: open a fresh round.
    t.round_start = t.responses.size();
    t.state = TaskState::open;
  }
  return out;
}

void TaskBoard::expire(const std::string& task_id) {
  auto& t = mutable_task(task_id);
  if (t.state == TaskState::resolved) throw conflict("task " + task_id + " is already resolved");
  t.state = TaskState::expired;
  live_pair_.erase(t.pair);
}

VerificationTask& TaskBoard::mutable_task(const std::string& id) {
  const auto it = tasks_.find(id);
  if (it == tasks_.end()) throw not_found("no task " + id);
  return it->second;
}

const VerificationTask& TaskBoard::task(const std::string& id) const {
  const auto it = tasks_.find(id);
  if (it == tasks_.end()) throw not_found("no task " + id);
  return it->second;
}

std::vector<VerificationTask> TaskBoard::tasks(bool include_gold) const {
  std::vector<VerificationTask> out;
  for (const auto& [id, t] : tasks_) {
    if (include_gold || !t.gold) out.push_back(t);
  }
  return out;
}

std::vector<VerificationTask> TaskBoard::open_tasks() const {
  std::vector<VerificationTask> out;
  for (const auto& [id, t] : tasks_) {
    if (!t.gold && (t.state == TaskState::open || t.state == TaskState::assigned)) out.push_back(t);
  }
  return out;
}

std::size_t TaskBoard::open_count() const { return open_tasks().size(); }

std::size_t TaskBoard::active_annotators() const {
  return static_cast<std::size_t>(
      std::count_if(profiles_.begin(), profiles_.end(), [](const auto& kv) { return kv.second.active; }));
}

nlohmann::json TaskBoard::to_json() const {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& [id, t] : tasks_) tasks.push_back(sloop::to_json(t, true));
  nlohmann::json gold = nlohmann::json::array();
  for (const auto& [p, l] : gold_pool_) gold.push_back({p.first, p.second, to_string(l)});
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& [id, p] : profiles_) profiles.push_back(sloop::to_json(p));
  nlohmann::json pending = nlohmann::json::object();
  for (const auto& [a, ids] : pending_gold_) pending[a] = ids;
  return {{"config", sloop::to_json(config_)}, {"tasks", tasks},     {"gold", gold},
          {"profiles", profiles},              {"pending", pending}, {"counter", counter_}};
}

TaskBoard TaskBoard::from_json(const nlohmann::json& j) {
  TaskBoard b(feedback_config_from_json(j.at("config")));
  for (const auto& tj : j.at("tasks")) {
    auto t = task_from_json(tj);
    if (!t.gold && t.state != TaskState::expired) b.live_pair_[t.pair] = t.task_id;
    b.tasks_.emplace(t.task_id, t);
  }
  for (const auto& g : j.at("gold")) {
    b.gold_pool_.emplace_back(ImagePair{g.at(0).get<std::string>(), g.at(1).get<std::string>()},
                              label_from_string(g.at(2).get<std::string>()));
  }
  for (const auto& pj : j.at("profiles")) {
    auto p = profile_from_json(pj);
    b.profiles_.emplace(p.annotator_id, p);
  }
  for (const auto& [a, ids] : j.at("pending").items()) {
    b.pending_gold_[a] = ids.get<std::set<std::string>>();
  }
  b.counter_ = j.at("counter").get<std::uint64_t>();
  return b;
}

Label true_label(const IdentityOracle& truth, const ImagePair& pair) {
  const auto a = truth.find(pair.first);
  const auto b = truth.find(pair.second);
  if (a == truth.end() || b == truth.end()) throw not_found("oracle has no identity for " + pair.first + "/" + pair.second);
  return a->second == b->second ? Label::same : Label::different;
}

std::optional<Label> OracleAnnotator::judge(const VerificationTask& task) { return true_label(*truth_, task.pair); }

std::optional<Label> SimulatedAnnotator::judge(const VerificationTask& task) {
  if (skip_ > 0.0 && rng_.bernoulli(skip_)) return std::nullopt;
  const Label t = true_label(*truth_, task.pair);
  if (rng_.bernoulli(accuracy_)) return t;
  return t == Label::same ? Label::different : Label::same;
}

std::vector<std::pair<ImagePair, Label>> make_gold_pairs(const IdentityOracle& truth, std::size_t count,
                                                        std::uint64_t seed) {
  std::map<int, std::vector<std::string>> by_id;
  std::vector<std::string> ids;
  for (const auto& [img, ind] : truth) {
    by_id[ind].push_back(img);
    ids.push_back(img);
  }
  std::vector<std::pair<ImagePair, Label>> out;
  if (ids.size() < 2) return out;
  std::vector<int> multi;
  for (const auto& [ind, imgs] : by_id) {
    if (imgs.size() >= 2) multi.push_back(ind);
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    if (i % 2 == 0 && !multi.empty()) {
      const auto& imgs = by_id[multi[rng.below(multi.size())]];
      const auto pick = rng.sample_indices(imgs.size(), 2);
      out.emplace_back(make_pair_key(imgs[pick[0]], imgs[pick[1]]), Label::same);
    } else {
      for (int attempt = 0; attempt < 64; ++attempt) {
        const auto pick = rng.sample_indices(ids.size(), 2);
        const auto pair = make_pair_key(ids[pick[0]], ids[pick[1]]);
        if (truth.at(pair.first) != truth.at(pair.second)) {
          out.emplace_back(pair, Label::different);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace sloop

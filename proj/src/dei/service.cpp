#include "sloop/dei/service.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <chrono>
#include <set>

#include "sloop/error.hpp"
#include "sloop/image_io.hpp"
#include "sloop/log.hpp"
#include "sloop/metrics.hpp"

namespace sloop::dei {

std::vector<Principal> principals_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw validation_error("principals: expected a list");
  std::vector<Principal> out;
  for (const auto& p : j) {
    Principal pr;
    pr.name = p.at("name").get<std::string>();
    pr.secret = p.at("secret").get<std::string>();
    pr.capabilities = p.at("capabilities").get<std::vector<std::string>>();
    if (pr.name.empty() || pr.secret.empty()) throw validation_error("principals: name and secret are required");
    out.push_back(std::move(pr));
  }
  return out;
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

namespace {

std::string random_token() {
  unsigned char bytes[24];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw Error(ErrorCode::internal, "no randomness for session token");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : bytes) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

}  // namespace

DeiService::DeiService(DeiConfig config, Clock clock) : config_(std::move(config)), clock_(std::move(clock)) {
  if (config_.workflows.empty()) throw validation_error("dei: at least one workflow is required");
  for (const auto& w : config_.workflows) {
    if (!workflows_.emplace(w.name, w).second) throw validation_error("dei: duplicate workflow " + w.name);
  }
  for (const auto& p : config_.principals) principals_[p.name] = p;
  store_ = std::make_unique<Store>(Store::Options{config_.data_dir, config_.sync, config_.feedback});
  for (const auto& [id, img] : store_->state().images) {
    if (!workflows_.count(img.species)) {
      throw validation_error("dei: stored image " + id + " uses unknown workflow " + img.species);
    }
  }
}

Session DeiService::authenticate(const std::string& principal, const std::string& secret,
                                 const std::vector<std::string>& requested) {
  const auto it = principals_.find(principal);
  if (it == principals_.end() || it->second.secret != secret) {
    throw Error(ErrorCode::authentication, "unknown principal or bad secret");
  }
  std::vector<std::string> granted;
  for (const auto& cap : requested) {
    const auto& permitted = it->second.capabilities;
    if (std::find(permitted.begin(), permitted.end(), cap) != permitted.end() &&
        std::find(granted.begin(), granted.end(), cap) == granted.end()) {
      granted.push_back(cap);
    }
  }
  if (granted.empty()) throw Error(ErrorCode::authorization, "no requested capability is permitted");
  Session s;
  s.session_id = random_token();
  s.principal = principal;
  s.capabilities = granted;
  s.expires_ms = clock_() + config_.session_ttl_ms;
  std::unique_lock lock(mu_);
  sessions_[s.session_id] = s;
  ++session_counter_;
  return s;
}

Session DeiService::session(const std::string& token) const {
  std::shared_lock lock(mu_);
  const auto it = sessions_.find(token);
  if (it == sessions_.end()) throw Error(ErrorCode::authentication, "unknown session token");
  if (it->second.expires_ms <= clock_()) throw Error(ErrorCode::authentication, "session expired");
  return it->second;
}

std::size_t DeiService::session_count() const {
  std::shared_lock lock(mu_);
  return sessions_.size();
}

const Session& DeiService::require(const std::string& token, const std::string& capability) const {
  const auto it = sessions_.find(token);
  if (it == sessions_.end()) throw Error(ErrorCode::authentication, "unknown session token");
  if (it->second.expires_ms <= clock_()) throw Error(ErrorCode::authentication, "session expired");
  if (!capability.empty() && !it->second.can(capability)) {
    throw Error(ErrorCode::authorization, "session lacks capability '" + capability + "'");
  }
  return it->second;
}

std::uint64_t DeiService::commit_locked(LogOp op, nlohmann::json payload) {
  const auto seq = store_->commit(op, std::move(payload));
  if (config_.snapshot_every > 0 && ++commits_since_snapshot_ >= config_.snapshot_every) {
    store_->snapshot();
    commits_since_snapshot_ = 0;
  }
  return seq;
}

void DeiService::snapshot() {
  std::unique_lock lock(mu_);
  store_->snapshot();
  commits_since_snapshot_ = 0;
}

const WorkflowDef& DeiService::workflow(const std::string& name) const {
  const auto it = workflows_.find(name);
  if (it == workflows_.end()) throw not_found("no workflow named '" + name + "'");
  return it->second;
}

std::vector<std::string> DeiService::workflow_names() const {
  std::vector<std::string> out;
  for (const auto& [name, w] : workflows_) out.push_back(name);
  return out;
}

std::string DeiService::put_image(const std::string& token, std::span<const std::uint8_t> blob,
                                  const std::string& workflow_name, const ImageMetadata& metadata,
                                  const std::vector<Point2>& fiducials) {
  const auto& def = workflow(workflow_name);
  const GrayImage decoded = decode_image(blob);
  for (const auto& f : fiducials) {
    if (!(f.x >= 0 && f.y >= 0 && f.x < decoded.width && f.y < decoded.height)) {
      throw validation_error("fiducial outside image bounds");
    }
  }
  std::unique_lock lock(mu_);
  const auto& s = require(token, "upload");
  const auto ref = store_->put_blob(blob);
  const auto counter = store_->state().image_counter + 1;
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%06llu", static_cast<unsigned long long>(counter));
  ImageRecord r;
  r.image_id = buf;
  r.blob_ref = ref;
  r.state = def.initial;
  r.species = def.name;
  r.metadata = metadata;
  r.fiducials = fiducials;
  r.width = decoded.width;
  r.height = decoded.height;
  r.history.push_back({r.state, clock_(), s.session_id});
  commit_locked(LogOp::upsert, {{"kind", "image"}, {"record", to_json(r)}, {"counter", counter}});
  return r.image_id;
}

ImageRecord DeiService::get_image(const std::string& image_id) const {
  std::shared_lock lock(mu_);
  const auto& images = store_->state().images;
  const auto it = images.find(image_id);
  if (it == images.end()) throw not_found("no image " + image_id);
  return it->second;
}

std::vector<ImageRecord> DeiService::list_images(const std::string& workflow_name, const std::string& state) const {
  std::shared_lock lock(mu_);
  std::vector<ImageRecord> out;
  for (const auto& [id, r] : store_->state().images) {
    if (!workflow_name.empty() && r.species != workflow_name) continue;
    if (!state.empty() && r.state != state) continue;
    out.push_back(r);
  }
  return out;
}

std::string DeiService::put_blob(const std::string& token, std::span<const std::uint8_t> bytes) {
  {
    std::shared_lock lock(mu_);
    require(token, "");
  }
  return store_->put_blob(bytes);
}

std::vector<std::uint8_t> DeiService::get_blob(const std::string& ref) const { return store_->get_blob(ref); }

bool DeiService::barrier_blocks(const ImageRecord& image, const WorkflowEdge& edge) const {
  const auto& def = workflows_.at(image.species);
  if (std::find(def.barrier_steps.begin(), def.barrier_steps.end(), edge.step) == def.barrier_steps.end()) {
    return false;
  }
  const auto up = def.upstream_of(edge.from);
  const std::set<std::string> upstream(up.begin(), up.end());
  for (const auto& [id, r] : store_->state().images) {
    if (r.species == image.species && upstream.count(r.state)) return true;
  }
  return false;
}

std::vector<WorkItem> DeiService::poll_work(const std::string& token, std::size_t max_items) {
  std::unique_lock lock(mu_);
  const auto& s = require(token, "");
  const auto now = clock_();
  std::vector<WorkItem> out;
  std::map<std::pair<std::string, std::string>, bool> barrier_cache;
  for (const auto& [id, r] : store_->state().images) {
    if (out.size() >= max_items) break;
    const auto& def = workflows_.at(r.species);
    for (const auto& e : def.edges) {
      if (e.from != r.state || e.executor != Executor::machine || !s.can(e.step)) continue;
      const std::string work_id = id + ":" + e.step;
      const auto lease = leases_.find(work_id);
      if (lease != leases_.end() && lease->second.expiry_ms > now) continue;
      const auto key = std::pair(r.species, e.step);
      auto cached = barrier_cache.find(key);
      if (cached == barrier_cache.end()) cached = barrier_cache.emplace(key, barrier_blocks(r, e)).first;
      if (cached->second) continue;
      leases_[work_id] = {s.session_id, now + config_.lease_ttl_ms};
      out.push_back({work_id, id, e.step, e.from, e.to, s.session_id, now + config_.lease_ttl_ms});
      if (out.size() >= max_items) break;
    }
  }
  return out;
}

void DeiService::validate_transition_payload(const ImageRecord& image, const WorkflowEdge& edge,
                                             const nlohmann::json& payload) const {
  validate_payload(edge.payload_schema, payload);
  const auto& st = store_->state();
  if (edge.payload_schema == "fiducials") {
    for (const auto& f : fiducials_from_json(payload.at("fiducials"))) {
      if (!(f.x >= 0 && f.y >= 0 && f.x < image.width && f.y < image.height)) {
        throw validation_error("fiducial outside image bounds");
      }
    }
  } else if (edge.payload_schema == "feature_set") {
    if (!store_->has_blob(payload.at("feature_set").get<std::string>())) {
      throw validation_error("feature_set reference does not resolve to a stored blob");
    }
  } else if (edge.payload_schema == "rankings") {
    if (!st.rankings.count(payload.at("rankings").get<std::string>())) {
      throw validation_error("rankings reference does not resolve to stored scores");
    }
  } else if (edge.payload_schema == "verification") {
    for (const auto& t : payload.at("tasks")) {
      st.tasks.task(t.get<std::string>());
    }
  }
}

std::string DeiService::commit_transition(const std::string& token, const std::string& image_id,
                                          const std::string& from, const std::string& to,
                                          const nlohmann::json& payload) {
  std::unique_lock lock(mu_);
  const auto& images = store_->state().images;
  const auto it = images.find(image_id);
  if (it == images.end()) throw not_found("no image " + image_id);
  const auto& image = it->second;
  const auto& def = workflows_.at(image.species);
  const WorkflowEdge* edge = def.find_edge(from, to);
  if (!edge) throw validation_error("no edge " + from + " -> " + to + " in workflow " + def.name);
  const auto& s = require(token, edge->step);
  if (image.state != from) {
    throw conflict("image " + image_id + " is in state " + image.state + ", not " + from);
  }
  const std::string work_id = image_id + ":" + edge->step;
  const auto now = clock_();
  const auto lease = leases_.find(work_id);
  if (lease != leases_.end() && lease->second.expiry_ms > now && lease->second.session_id != s.session_id) {
    throw conflict("work item " + work_id + " is leased to another session");
  }
  validate_transition_payload(image, *edge, payload);

  nlohmann::json entry = {{"image_id", image_id},
                          {"from", from},
                          {"to", to},
                          {"step", edge->step},
                          {"actor", s.session_id},
                          {"timestamp_ms", std::max(now, image.history.empty() ? now : image.history.back().timestamp_ms)},
                          {"payload", payload}};
  nlohmann::json artifacts = nlohmann::json::object();
  if (edge->payload_schema == "fiducials") {
    entry["fiducials"] = payload.at("fiducials");
  } else if (edge->payload_schema == "feature_set") {
    artifacts["feature_set"] = payload.at("feature_set");
  } else if (edge->payload_schema == "rankings") {
    artifacts["rankings"] = payload.at("rankings");
  } else if (edge->payload_schema == "verification") {
    artifacts["verification"] = payload.at("tasks");
  } else if (edge->payload_schema == "cohort") {
    artifacts["cohort_id"] = payload.at("cohort_id");
  }
  entry["artifacts"] = artifacts;
  commit_locked(LogOp::transition, entry);
  leases_.erase(work_id);
  return to;
}

void DeiService::put_scores(const std::string& token, const RankedList& ranking, const nlohmann::json& debug) {
  std::unique_lock lock(mu_);
  require(token, "match");
  if (!store_->state().images.count(ranking.query_id)) throw not_found("no image " + ranking.query_id);
  commit_locked(LogOp::score_write,
                {{"ranking", to_json(ranking)}, {"debug", debug.is_null() ? nlohmann::json::object() : debug}});
}

RankedList DeiService::get_rankings(const std::string& image_id, std::size_t k) const {
  std::shared_lock lock(mu_);
  const auto& st = store_->state();
  if (!st.images.count(image_id)) throw not_found("no image " + image_id);
  const auto it = st.rankings.find(image_id);
  if (it == st.rankings.end()) return {image_id, {}};
  RankedList out = it->second.list;
  std::stable_sort(out.items.begin(), out.items.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.candidate_id < b.candidate_id;
  });
  if (k > 0 && out.items.size() > k) out.items.resize(k);
  return out;
}

nlohmann::json DeiService::get_ranking_debug(const std::string& image_id) const {
  std::shared_lock lock(mu_);
  const auto& st = store_->state();
  const auto it = st.rankings.find(image_id);
  return it == st.rankings.end() ? nlohmann::json::object() : it->second.debug;
}

std::vector<std::string> DeiService::create_tasks(const std::string& token, const std::vector<ImagePair>& pairs,
                                                  int iteration) {
  std::unique_lock lock(mu_);
  require(token, "verify");
  std::vector<std::string> ids;
  for (const auto& p : pairs) {
    const auto& images = store_->state().images;
    if (!images.count(p.first) || !images.count(p.second)) throw not_found("task pair references unknown image");
    commit_locked(LogOp::task_write, {{"cmd", "add_task"}, {"pair", {p.first, p.second}}, {"iteration", iteration}});
    ids.push_back(store_->state().tasks.tasks().back().task_id);
  }
  return ids;
}

void DeiService::add_gold(const std::string& token, const ImagePair& pair, Label truth) {
  std::unique_lock lock(mu_);
  require(token, "verify");
  commit_locked(LogOp::task_write, {{"cmd", "add_gold"}, {"pair", {pair.first, pair.second}}, {"truth", to_string(truth)}});
}

std::vector<VerificationTask> DeiService::get_tasks(const std::string& token, const std::string& annotator,
                                                    std::size_t max) {
  std::unique_lock lock(mu_);
  require(token, "verify");
  if (annotator.empty()) throw validation_error("annotator is required");
  // Fetching may create a gold task or mark tasks assigned, so it is logged;
  // the same call on a copy yields exactly what the replayed entry hands out.
  TaskBoard probe = store_->state().tasks;
  auto out = probe.fetch(annotator, max);
  commit_locked(LogOp::task_write, {{"cmd", "fetch"}, {"annotator", annotator}, {"max", max}});
  return out;
}

SubmitResult DeiService::respond(const std::string& token, const std::string& task_id, const std::string& annotator,
                                 Label label) {
  std::unique_lock lock(mu_);
  require(token, "verify");
  const auto& board = store_->state().tasks;
  // Duplicates and late answers are answered without touching the log.
  TaskBoard probe = board;
  const auto result = probe.respond(annotator, task_id, label, clock_());
  if (!result.accepted) return result;
  commit_locked(LogOp::task_write, {{"cmd", "respond"},
                                    {"annotator", annotator},
                                    {"task_id", task_id},
                                    {"label", to_string(label)},
                                    {"timestamp_ms", clock_()}});
  return result;
}

VerificationTask DeiService::get_task(const std::string& task_id) const {
  std::shared_lock lock(mu_);
  auto t = store_->state().tasks.task(task_id);
  t.truth.reset();
  return t;
}

std::vector<VerificationTask> DeiService::list_tasks() const {
  std::shared_lock lock(mu_);
  return store_->state().tasks.tasks();
}

std::vector<AnnotatorProfile> DeiService::annotators() const {
  std::shared_lock lock(mu_);
  std::vector<AnnotatorProfile> out;
  for (const auto& [id, p] : store_->state().tasks.profiles()) out.push_back(p);
  return out;
}

void DeiService::put_cohorts(const std::string& token, const CohortPartition& partition) {
  std::unique_lock lock(mu_);
  require(token, "verify");
  commit_locked(LogOp::merge, {{"partition", to_json(partition)}});
}

CohortPartition DeiService::get_cohorts() const {
  std::shared_lock lock(mu_);
  return store_->state().cohorts;
}

void DeiService::put_weights(const std::string& token, const std::string& workflow_name,
                             const EnsembleWeights& weights) {
  std::unique_lock lock(mu_);
  require(token, "verify");
  workflow(workflow_name);
  commit_locked(LogOp::upsert, {{"kind", "weights"}, {"workflow", workflow_name}, {"weights", to_json(weights)}});
}

std::optional<EnsembleWeights> DeiService::get_weights(const std::string& workflow_name) const {
  std::shared_lock lock(mu_);
  const auto& w = store_->state().weights;
  const auto it = w.find(workflow_name);
  if (it == w.end()) return std::nullopt;
  return it->second;
}

void DeiService::put_doc(const std::string& token, const std::string& name, const nlohmann::json& value) {
  std::unique_lock lock(mu_);
  require(token, "");
  commit_locked(LogOp::upsert, {{"kind", "doc"}, {"name", name}, {"value", value}});
}

std::optional<nlohmann::json> DeiService::get_doc(const std::string& name) const {
  std::shared_lock lock(mu_);
  const auto& docs = store_->state().docs;
  const auto it = docs.find(name);
  if (it == docs.end()) return std::nullopt;
  return it->second;
}

nlohmann::json DeiService::metrics() const {
  std::shared_lock lock(mu_);
  const auto& st = store_->state();
  nlohmann::json by_state = nlohmann::json::object();
  std::int64_t indexed = 0;
  for (const auto& [id, r] : st.images) {
    by_state[r.state] = by_state.value(r.state, 0) + 1;
    if (r.state == workflows_.at(r.species).terminal) ++indexed;
  }
  std::int64_t open = 0, resolved = 0, expensive = 0;
  for (const auto& t : st.tasks.tasks()) {
    if (t.state == TaskState::resolved) ++resolved;
    if (t.state == TaskState::open || t.state == TaskState::assigned) ++open;
  }
  for (const auto& [id, r] : st.rankings) expensive += r.debug.value("expensive_calls", std::int64_t{0});
  std::int64_t active = 0;
  for (const auto& [id, p] : st.tasks.profiles()) active += p.active ? 1 : 0;
  nlohmann::json rows = nlohmann::json::array();
  if (const auto it = st.docs.find("metrics_rows"); it != st.docs.end()) rows = it->second;
  return {{"images_total", st.images.size()},
          {"images_indexed", indexed},
          {"images_by_state", by_state},
          {"tasks_open", open},
          {"tasks_resolved", resolved},
          {"pairs_verified", resolved},
          {"expensive_calls", expensive},
          {"conflicts", st.cohorts.conflicts.size()},
          {"cohorts", st.cohorts.cohorts.size()},
          {"annotators_total", st.tasks.profiles().size()},
          {"annotators_active", active},
          {"last_seq", st.last_seq},
          {"rows", rows}};
}

std::string DeiService::metrics_csv() const {
  const auto m = metrics();
  std::vector<MetricsRow> rows;
  for (const auto& r : m.at("rows")) rows.push_back(metrics_row_from_json(r));
  return to_csv(rows);
}

}  // namespace sloop::dei

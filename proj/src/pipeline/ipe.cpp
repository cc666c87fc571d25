#include "sloop/error.hpp"
#include "sloop/image_io.hpp"
#include "sloop/log.hpp"
#include "sloop/pipeline.hpp"

namespace sloop {

IpeWorker::IpeWorker(dei::DeiApi& api, std::size_t batch) : api_(api), batch_(batch == 0 ? 1 : batch) {}

void IpeWorker::set_engine(const std::string& workflow, std::shared_ptr<MatchEngine> engine) {
  engines_[workflow] = std::move(engine);
}

MatchEngine& IpeWorker::engine(const std::string& workflow) {
  auto& slot = engines_[workflow];
  if (slot) return *slot;
  auto settings = match_settings_from_workflow(api_.workflow(workflow));
  std::optional<PrimedCnnModel> model;
  if (settings.needs_cnn()) {
    if (const auto doc = api_.get_doc(model_doc_name(workflow))) {
      const auto bytes = api_.get_blob(doc->at("blob").get<std::string>());
      model = deserialize_model(std::string(bytes.begin(), bytes.end()));
    } else {
      log_info("no primed CNN stored for " + workflow + "; training one");
      model = train_primed_cnn(SyntheticSpec{}, settings);
      const auto text = serialize_model(*model);
      const auto ref = api_.put_blob(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
      api_.put_doc(model_doc_name(workflow), {{"blob", ref}});
    }
  }
  slot = std::make_shared<MatchEngine>(std::move(settings), std::move(model));
  return *slot;
}

const ImageFeatures& IpeWorker::load_features(MatchEngine& eng, const dei::ImageRecord& rec) {
  if (!eng.has_features(rec.image_id)) {
    if (!rec.artifacts.contains("feature_set")) throw validation_error("image " + rec.image_id + " has no feature set");
    const auto bytes = api_.get_blob(rec.artifacts.at("feature_set").get<std::string>());
    eng.add_features(rec.image_id, decode_feature_set(bytes));
  }
  return eng.features(rec.image_id);
}

void IpeWorker::process(const dei::WorkItem& item) {
  const auto rec = api_.get_image(item.image_id);
  const auto def = api_.workflow(rec.species);
  const auto* edge = def.find_edge(item.from_state, item.to_state);
  if (!edge) throw validation_error("work item " + item.work_id + " has no edge");
  nlohmann::json payload = nlohmann::json::object();
  const auto& schema = edge->payload_schema;
  if (schema == "fiducials") {
    if (rec.fiducials.empty()) log_warn("image " + rec.image_id + " has no fiducials");
    payload["fiducials"] = dei::fiducials_to_json(rec.fiducials);
  } else if (schema == "feature_set") {
    auto& eng = engine(rec.species);
    const auto blob = api_.get_blob(rec.blob_ref);
    auto features = extract_image_features(to_grid(decode_image(blob)), rec.fiducials, eng.settings().features);
    const auto bytes = encode_feature_set(features);
    payload["feature_set"] = api_.put_blob(bytes);
    eng.add_features(rec.image_id, std::move(features));
  } else if (schema == "rankings") {
    auto& eng = engine(rec.species);
    std::vector<std::string> pool;
    for (const auto& other : api_.list_images(rec.species, "")) {
      if (other.image_id == rec.image_id || !other.artifacts.contains("feature_set")) continue;
      if (def.view_policy == "within_view" && other.metadata.view != rec.metadata.view) continue;
      load_features(eng, other);
      pool.push_back(other.image_id);
    }
    load_features(eng, rec);
    const auto weights = api_.get_weights(rec.species).value_or(eng.settings().weights);
    CascadeStats stats;
    CascadeDebug debug;
    RankedList ranking;
    ranking.query_id = rec.image_id;
    if (!pool.empty()) ranking = eng.rank(rec.image_id, pool, weights, &stats, &debug);
    stats_.expensive_calls += stats.expensive_calls;
    api_.put_scores(ranking, to_json(debug, stats));
    payload["rankings"] = rec.image_id;
  } else if (schema == "cohort") {
    const auto partition = api_.get_cohorts();
    const auto index = partition.index();
    const auto it = index.find(rec.image_id);
    payload["cohort_id"] = it == index.end() ? "c:" + rec.image_id : partition.cohorts[it->second].cohort_id;
  } else if (schema != "none") {
    throw validation_error("IPE cannot produce payload schema " + schema);
  }
  api_.commit_transition(rec.image_id, item.from_state, item.to_state, payload);
  ++stats_.steps[item.step];
}

std::size_t IpeWorker::run_once() {
  const auto items = api_.poll_work(batch_);
  for (const auto& item : items) {
    try {
      process(item);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::conflict) {
        ++stats_.conflicts;
        log_info("work item " + item.work_id + " lost: " + e.what());
      } else {
        log_error("work item " + item.work_id + " failed: " + e.what());
        throw;
      }
    }
  }
  return items.size();
}

std::size_t IpeWorker::run_until_idle() {
  std::size_t total = 0;
  while (const auto n = run_once()) total += n;
  return total;
}

}  // namespace sloop

#include "sloop/dei/records.hpp"

#include <algorithm>

#include "sloop/error.hpp"

namespace sloop::dei {

nlohmann::json to_json(const ImageMetadata& m) {
  return {{"capture_date", m.capture_date}, {"location", m.location}, {"view", m.view}};
}

ImageMetadata metadata_from_json(const nlohmann::json& j) {
  ImageMetadata m;
  if (!j.is_object()) return m;
  m.capture_date = j.value("capture_date", std::string());
  m.location = j.value("location", std::string());
  m.view = j.value("view", std::string());
  return m;
}

std::vector<Point2> fiducials_from_json(const nlohmann::json& j) {
  std::vector<Point2> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw validation_error("fiducials must be a list of [x, y]");
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw validation_error("fiducials must be a list of [x, y]");
    }
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

nlohmann::json fiducials_to_json(const std::vector<Point2>& f) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& p : f) a.push_back({p.x, p.y});
  return a;
}

nlohmann::json to_json(const ImageRecord& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : r.history) {
    history.push_back({{"state", h.state}, {"timestamp_ms", h.timestamp_ms}, {"actor", h.actor}});
  }
  return {{"image_id", r.image_id},
          {"blob_ref", r.blob_ref},
          {"state", r.state},
          {"species", r.species},
          {"metadata", to_json(r.metadata)},
          {"fiducials", fiducials_to_json(r.fiducials)},
          {"width", r.width},
          {"height", r.height},
          {"history", history},
          {"artifacts", r.artifacts}};
}

ImageRecord image_from_json(const nlohmann::json& j) {
  ImageRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.blob_ref = j.at("blob_ref").get<std::string>();
  r.state = j.at("state").get<std::string>();
  r.species = j.at("species").get<std::string>();
  r.metadata = metadata_from_json(j.value("metadata", nlohmann::json::object()));
  r.fiducials = fiducials_from_json(j.value("fiducials", nlohmann::json::array()));
  r.width = j.value("width", 0);
  r.height = j.value("height", 0);
  for (const auto& h : j.value("history", nlohmann::json::array())) {
    r.history.push_back({h.at("state").get<std::string>(), h.at("timestamp_ms").get<std::int64_t>(),
                         h.at("actor").get<std::string>()});
  }
  r.artifacts = j.value("artifacts", nlohmann::json::object());
  return r;
}

nlohmann::json to_json(const WorkItem& w) {
  return {{"work_id", w.work_id},       {"image_id", w.image_id},     {"step", w.step},
          {"from_state", w.from_state}, {"to_state", w.to_state},     {"claimed_by", w.claimed_by},
          {"lease_expiry_ms", w.lease_expiry_ms}};
}

WorkItem work_item_from_json(const nlohmann::json& j) {
  WorkItem w;
  w.work_id = j.at("work_id").get<std::string>();
  w.image_id = j.at("image_id").get<std::string>();
  w.step = j.at("step").get<std::string>();
  w.from_state = j.value("from_state", std::string());
  w.to_state = j.value("to_state", std::string());
  w.claimed_by = j.value("claimed_by", std::string());
  w.lease_expiry_ms = j.value("lease_expiry_ms", std::int64_t{0});
  return w;
}

bool Session::can(const std::string& step) const {
  return std::find(capabilities.begin(), capabilities.end(), step) != capabilities.end();
}

nlohmann::json to_json(const Session& s) {
  return {{"token", s.session_id}, {"principal", s.principal}, {"capabilities", s.capabilities},
          {"expires_ms", s.expires_ms}};
}

nlohmann::json to_json(const RankedList& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& c : r.items) items.push_back({{"candidate_id", c.candidate_id}, {"score", c.score}, {"tier", c.tier}});
  return {{"query_id", r.query_id}, {"items", items}};
}

RankedList ranked_list_from_json(const nlohmann::json& j) {
  RankedList r;
  r.query_id = j.at("query_id").get<std::string>();
  for (const auto& c : j.at("items")) {
    r.items.push_back({c.at("candidate_id").get<std::string>(), c.at("score").get<double>(), c.value("tier", 0)});
  }
  return r;
}

}  // namespace sloop::dei

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/feedback.hpp"
#include "sloop/features.hpp"
#include "sloop/ranking.hpp"

namespace sloop::dei {

struct ImageMetadata {
  std::string capture_date;  // ISO-8601
  std::string location;
  std::string view;
};

struct StateEntry {
  std::string state;
  std::int64_t timestamp_ms = 0;
  std::string actor;  // session id, or "upload"
};

struct ImageRecord {
  std::string image_id;
  std::string blob_ref;  // sha256 of the uploaded bytes
  std::string state;
  std::string species;  // workflow name
  ImageMetadata metadata;
  std::vector<Point2> fiducials;
  int width = 0;
  int height = 0;
  std::vector<StateEntry> history;
  // Step artifacts: feature_set / rankings references, verification tasks, cohort id.
  nlohmann::json artifacts = nlohmann::json::object();
};

nlohmann::json to_json(const ImageRecord& r);
ImageRecord image_from_json(const nlohmann::json& j);
ImageMetadata metadata_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ImageMetadata& m);
std::vector<Point2> fiducials_from_json(const nlohmann::json& j);
nlohmann::json fiducials_to_json(const std::vector<Point2>& f);

struct WorkItem {
  std::string work_id;
  std::string image_id;
  std::string step;
  std::string from_state;
  std::string to_state;
  std::string claimed_by;
  std::int64_t lease_expiry_ms = 0;
};

nlohmann::json to_json(const WorkItem& w);
WorkItem work_item_from_json(const nlohmann::json& j);

struct Session {
  std::string session_id;
  std::string principal;
  std::vector<std::string> capabilities;
  std::int64_t expires_ms = 0;

  bool can(const std::string& step) const;
};

nlohmann::json to_json(const Session& s);

// Stored ranking for one query plus optional stage accounting.
struct StoredRanking {
  RankedList list;
  nlohmann::json debug = nlohmann::json::object();
};

nlohmann::json to_json(const RankedList& r);
RankedList ranked_list_from_json(const nlohmann::json& j);

}  // namespace sloop::dei

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sloop/dei/service.hpp"
#include "sloop/image_io.hpp"
#include "sloop/rng.hpp"
#include "sloop/workflow.hpp"
#include "test_helpers.hpp"

namespace sloop::test {

inline const std::vector<std::string> kAllCaps = {"preprocess", "enter_fiducials", "extract", "match",
                                                  "verify",     "index",           "upload"};

inline dei::DeiConfig dei_config(const std::filesystem::path& dir, bool sync = false) {
  dei::DeiConfig c;
  c.data_dir = dir;
  c.sync = sync;
  c.workflows = {builtin_workflow("default")};
  c.principals = {{"admin", "admin-secret", kAllCaps},
                  {"ipe", "ipe-secret", {"preprocess", "extract", "match", "index", "upload"}},
                  {"annotator", "annotator-secret", {"verify"}}};
  return c;
}

inline std::vector<std::uint8_t> tiny_pgm(std::uint64_t seed, int w = 40, int h = 30) {
  GrayImage g;
  g.width = w;
  g.height = h;
  Rng rng(seed);
  for (int i = 0; i < w * h; ++i) g.pixels.push_back(static_cast<std::uint8_t>(rng.below(256)));
  return encode_pgm(g);
}

// A payload that satisfies the edge's schema, creating whatever it refers to.
inline nlohmann::json valid_payload(dei::DeiService& svc, const std::string& token, const std::string& image_id,
                                    const WorkflowEdge& e) {
  if (e.payload_schema == "fiducials") return {{"fiducials", {{4.0, 5.0}, {20.0, 12.0}}}};
  if (e.payload_schema == "feature_set") {
    const std::vector<std::uint8_t> bytes(image_id.begin(), image_id.end());
    return {{"feature_set", svc.put_blob(token, bytes)}};
  }
  if (e.payload_schema == "rankings") {
    svc.put_scores(token, RankedList{image_id, {}});
    return {{"rankings", image_id}};
  }
  if (e.payload_schema == "verification") return {{"tasks", nlohmann::json::array()}};
  if (e.payload_schema == "cohort") return {{"cohort_id", "c:" + image_id}};
  return nlohmann::json::object();
}

// Service over a fresh directory, plus an all-capability session.
struct DeiFixture {
  explicit DeiFixture(const std::string& tag, bool sync = false) : dir(tag) { open(sync); }

  void open(bool sync = false) {
    svc.reset();
    svc = std::make_unique<dei::DeiService>(dei_config(dir.path(), sync));
    admin = svc->authenticate("admin", "admin-secret", kAllCaps).session_id;
  }

  std::string upload(std::uint64_t seed, const std::string& view = "left") {
    dei::ImageMetadata m;
    m.view = view;
    m.capture_date = "2024-01-01";
    return svc->put_image(admin, tiny_pgm(seed), "default", m);
  }

  TempDir dir;
  std::unique_ptr<dei::DeiService> svc;
  std::string admin;
};

}  // namespace sloop::test

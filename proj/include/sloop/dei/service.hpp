#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/dei/records.hpp"
#include "sloop/dei/store.hpp"
#include "sloop/workflow.hpp"

namespace sloop::dei {

struct Principal {
  std::string name;
  std::string secret;
  std::vector<std::string> capabilities;
};

struct DeiConfig {
  std::filesystem::path data_dir;
  std::vector<Principal> principals;
  std::vector<WorkflowDef> workflows;
  std::int64_t lease_ttl_ms = 300'000;
  std::int64_t session_ttl_ms = 24 * 3600 * 1000LL;
  bool sync = true;
  FeedbackConfig feedback;
  // Snapshot after this many commits; 0 disables.
  std::uint64_t snapshot_every = 0;
};

// Principals from JSON: [{"name","secret","capabilities":[...]}].
std::vector<Principal> principals_from_json(const nlohmann::json& j);

using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

// Data Exchange and Interaction server core. Writes go through one
// committer lock; reads take a shared lock, so a reader never sees half of
// a commit.
class DeiService {
 public:
  explicit DeiService(DeiConfig config, Clock clock = system_clock_ms);

  Session authenticate(const std::string& principal, const std::string& secret,
                       const std::vector<std::string>& requested);
  // Throws authentication error for unknown or expired tokens.
  Session session(const std::string& token) const;

  std::string put_image(const std::string& token, std::span<const std::uint8_t> blob, const std::string& workflow,
                        const ImageMetadata& metadata, const std::vector<Point2>& fiducials = {});
  ImageRecord get_image(const std::string& image_id) const;
  std::vector<ImageRecord> list_images(const std::string& workflow = {}, const std::string& state = {}) const;

  std::string put_blob(const std::string& token, std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> get_blob(const std::string& ref) const;

  std::vector<WorkItem> poll_work(const std::string& token, std::size_t max_items);
  std::string commit_transition(const std::string& token, const std::string& image_id, const std::string& from,
                                const std::string& to, const nlohmann::json& payload);

  void put_scores(const std::string& token, const RankedList& ranking, const nlohmann::json& debug = {});
  // Top k (all when k == 0); empty for an image that has not been matched.
  RankedList get_rankings(const std::string& image_id, std::size_t k = 0) const;
  nlohmann::json get_ranking_debug(const std::string& image_id) const;

  std::vector<std::string> create_tasks(const std::string& token, const std::vector<ImagePair>& pairs,
                                        int iteration);
  void add_gold(const std::string& token, const ImagePair& pair, Label truth);
  std::vector<VerificationTask> get_tasks(const std::string& token, const std::string& annotator, std::size_t max);
  SubmitResult respond(const std::string& token, const std::string& task_id, const std::string& annotator,
                       Label label);
  VerificationTask get_task(const std::string& task_id) const;
  std::vector<VerificationTask> list_tasks() const;
  std::vector<AnnotatorProfile> annotators() const;

  void put_cohorts(const std::string& token, const CohortPartition& partition);
  CohortPartition get_cohorts() const;

  void put_weights(const std::string& token, const std::string& workflow, const EnsembleWeights& weights);
  std::optional<EnsembleWeights> get_weights(const std::string& workflow) const;

  // Named JSON documents (experiment metrics rows, counters).
  void put_doc(const std::string& token, const std::string& name, const nlohmann::json& value);
  std::optional<nlohmann::json> get_doc(const std::string& name) const;

  const WorkflowDef& workflow(const std::string& name) const;
  std::vector<std::string> workflow_names() const;

  nlohmann::json metrics() const;
  std::string metrics_csv() const;

  // Test hooks.
  Store& store() { return *store_; }
  void snapshot();
  std::size_t session_count() const;

 private:
  const Session& require(const std::string& token, const std::string& capability) const;
  std::uint64_t commit_locked(LogOp op, nlohmann::json payload);
  bool barrier_blocks(const ImageRecord& image, const WorkflowEdge& edge) const;
  void validate_transition_payload(const ImageRecord& image, const WorkflowEdge& edge,
                                   const nlohmann::json& payload) const;

  DeiConfig config_;
  Clock clock_;
  std::unique_ptr<Store> store_;
  std::map<std::string, WorkflowDef> workflows_;
  std::map<std::string, Principal> principals_;

  mutable std::shared_mutex mu_;
  std::map<std::string, Session> sessions_;
  struct Lease {
    std::string session_id;
    std::int64_t expiry_ms = 0;
  };
  std::map<std::string, Lease> leases_;  // work_id -> lease
  std::uint64_t commits_since_snapshot_ = 0;
  std::uint64_t session_counter_ = 0;
};

}  // namespace sloop::dei

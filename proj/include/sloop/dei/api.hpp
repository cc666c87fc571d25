#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sloop/dei/records.hpp"
#include "sloop/ensemble.hpp"
#include "sloop/feedback.hpp"
#include "sloop/workflow.hpp"

namespace sloop::dei {

class DeiService;

// Client view of a DEI. One instance holds one session.
class DeiApi {
 public:
  virtual ~DeiApi() = default;

  virtual Session login(const std::string& principal, const std::string& secret,
                        const std::vector<std::string>& capabilities) = 0;

  virtual std::string put_image(std::span<const std::uint8_t> blob, const std::string& workflow,
                                const ImageMetadata& metadata, const std::vector<Point2>& fiducials) = 0;
  virtual ImageRecord get_image(const std::string& image_id) = 0;
  virtual std::vector<ImageRecord> list_images(const std::string& workflow, const std::string& state) = 0;
  virtual std::string put_blob(std::span<const std::uint8_t> bytes) = 0;
  virtual std::vector<std::uint8_t> get_blob(const std::string& ref) = 0;

  virtual std::vector<WorkItem> poll_work(std::size_t max_items) = 0;
  virtual std::string commit_transition(const std::string& image_id, const std::string& from, const std::string& to,
                                        const nlohmann::json& payload) = 0;

  virtual void put_scores(const RankedList& ranking, const nlohmann::json& debug) = 0;
  virtual RankedList get_rankings(const std::string& image_id, std::size_t k) = 0;
  virtual nlohmann::json get_ranking_debug(const std::string& image_id) = 0;

  virtual std::vector<std::string> create_tasks(const std::vector<ImagePair>& pairs, int iteration) = 0;
  virtual void add_gold(const ImagePair& pair, Label truth) = 0;
  virtual std::vector<VerificationTask> get_tasks(const std::string& annotator, std::size_t max) = 0;
  virtual SubmitResult respond(const std::string& task_id, const std::string& annotator, Label label) = 0;
  virtual std::vector<VerificationTask> list_tasks() = 0;
  virtual std::vector<AnnotatorProfile> annotators() = 0;

  virtual void put_cohorts(const CohortPartition& partition) = 0;
  virtual CohortPartition get_cohorts() = 0;
  virtual void put_weights(const std::string& workflow, const EnsembleWeights& weights) = 0;
  virtual std::optional<EnsembleWeights> get_weights(const std::string& workflow) = 0;
  virtual void put_doc(const std::string& name, const nlohmann::json& value) = 0;
  virtual std::optional<nlohmann::json> get_doc(const std::string& name) = 0;

  virtual WorkflowDef workflow(const std::string& name) = 0;
};

// Direct calls into a service in the same process.
std::unique_ptr<DeiApi> make_local_api(DeiService& service);
// REST client against base_url (e.g. http://127.0.0.1:8080).
std::unique_ptr<DeiApi> make_http_api(const std::string& base_url);

}  // namespace sloop::dei

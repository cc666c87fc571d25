#include "sloop/dei/api.hpp"

#include "sloop/dei/service.hpp"
#include "sloop/error.hpp"

namespace sloop::dei {

namespace {

class LocalApi final : public DeiApi {
 public:
  explicit LocalApi(DeiService& s) : s_(s) {}

  Session login(const std::string& principal, const std::string& secret,
                const std::vector<std::string>& capabilities) override {
    auto session = s_.authenticate(principal, secret, capabilities);
    token_ = session.session_id;
    return session;
  }

  std::string put_image(std::span<const std::uint8_t> blob, const std::string& workflow,
                        const ImageMetadata& metadata, const std::vector<Point2>& fiducials) override {
    return s_.put_image(token_, blob, workflow, metadata, fiducials);
  }
  ImageRecord get_image(const std::string& id) override { return s_.get_image(id); }
  std::vector<ImageRecord> list_images(const std::string& wf, const std::string& state) override {
    return s_.list_images(wf, state);
  }
  std::string put_blob(std::span<const std::uint8_t> bytes) override { return s_.put_blob(token_, bytes); }
  std::vector<std::uint8_t> get_blob(const std::string& ref) override { return s_.get_blob(ref); }

  std::vector<WorkItem> poll_work(std::size_t max_items) override { return s_.poll_work(token_, max_items); }
  std::string commit_transition(const std::string& id, const std::string& from, const std::string& to,
                                const nlohmann::json& payload) override {
    return s_.commit_transition(token_, id, from, to, payload);
  }

  void put_scores(const RankedList& ranking, const nlohmann::json& debug) override {
    s_.put_scores(token_, ranking, debug);
  }
  RankedList get_rankings(const std::string& id, std::size_t k) override { return s_.get_rankings(id, k); }
  nlohmann::json get_ranking_debug(const std::string& id) override { return s_.get_ranking_debug(id); }

  std::vector<std::string> create_tasks(const std::vector<ImagePair>& pairs, int iteration) override {
    return s_.create_tasks(token_, pairs, iteration);
  }
  void add_gold(const ImagePair& pair, Label truth) override { s_.add_gold(token_, pair, truth); }
  std::vector<VerificationTask> get_tasks(const std::string& annotator, std::size_t max) override {
    return s_.get_tasks(token_, annotator, max);
  }
  SubmitResult respond(const std::string& task_id, const std::string& annotator, Label label) override {
    return s_.respond(token_, task_id, annotator, label);
  }
  std::vector<VerificationTask> list_tasks() override { return s_.list_tasks(); }
  std::vector<AnnotatorProfile> annotators() override { return s_.annotators(); }

  void put_cohorts(const CohortPartition& p) override { s_.put_cohorts(token_, p); }
  CohortPartition get_cohorts() override { return s_.get_cohorts(); }
  void put_weights(const std::string& wf, const EnsembleWeights& w) override { s_.put_weights(token_, wf, w); }
  std::optional<EnsembleWeights> get_weights(const std::string& wf) override { return s_.get_weights(wf); }
  void put_doc(const std::string& name, const nlohmann::json& value) override { s_.put_doc(token_, name, value); }
  std::optional<nlohmann::json> get_doc(const std::string& name) override { return s_.get_doc(name); }

  WorkflowDef workflow(const std::string& name) override { return s_.workflow(name); }

 private:
  DeiService& s_;
  std::string token_;
};

}  // namespace

std::unique_ptr<DeiApi> make_local_api(DeiService& service) { return std::make_unique<LocalApi>(service); }

}  // namespace sloop::dei

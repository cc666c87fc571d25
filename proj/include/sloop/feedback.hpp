#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sloop/ranking.hpp"
#include "sloop/rng.hpp"

namespace sloop {

enum class Label { same, different, unsure };
enum class TaskState { open, assigned, resolved, expired };

const char* to_string(Label l);
const char* to_string(TaskState s);
Label label_from_string(const std::string& s);
TaskState task_state_from_string(const std::string& s);

// Unordered image pair, stored with first < second.
using ImagePair = std::pair<std::string, std::string>;
ImagePair make_pair_key(const std::string& a, const std::string& b);

struct Response {
  std::string annotator_id;
  Label label = Label::unsure;
  std::int64_t timestamp = 0;
};

struct VerificationTask {
  std::string task_id;
  ImagePair pair;
  TaskState state = TaskState::open;
  std::vector<Response> responses;
  std::optional<Label> consensus;
  bool gold = false;
  std::optional<Label> truth;  // gold tasks only; never sent to annotators
  int iteration = 0;
  // Responses before this index belong to an earlier, all-unsure round.
  std::size_t round_start = 0;
};

nlohmann::json to_json(const VerificationTask& t, bool include_truth = false);
VerificationTask task_from_json(const nlohmann::json& j);

struct FeedbackConfig {
  double budget_fraction = 0.01;
  int redundancy = 3;
  double consensus = 0.7;
  int gold_every = 10;
  double deactivate_below = 0.6;
  int min_gold = 5;
  double prior_a = 2.0;
  double prior_b = 1.0;
  double eta = 0.5;
};

FeedbackConfig feedback_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeedbackConfig& c);

struct AnnotatorProfile {
  std::string annotator_id;
  double a = 2.0;
  double b = 1.0;
  int gold_correct = 0;
  int gold_total = 0;
  bool active = true;
  int answered = 0;  // responses submitted, gold included
  int golds_seen = 0;

  double reliability() const { return a / (a + b); }
};

nlohmann::json to_json(const AnnotatorProfile& p);
AnnotatorProfile profile_from_json(const nlohmann::json& j);

// The ceil(f * pool_size) highest-scoring unverified pairs over all
// rankings, (a,b) and (b,a) merged with the higher score. Ties go to the
// lexicographically smaller pair.
std::vector<ImagePair> select_verification_pairs(const std::vector<RankedList>& rankings, std::size_t pool_size,
                                                 double f, const std::set<ImagePair>& already_verified);

// Reliability-weighted vote; see FeedbackConfig for the thresholds.
std::optional<Label> resolve(const VerificationTask& task, const std::map<std::string, AnnotatorProfile>& profiles,
                             const FeedbackConfig& config);

// Beta posterior update from one gold outcome, then the deactivation rule.
AnnotatorProfile update_reliability(AnnotatorProfile profile, bool correct, const FeedbackConfig& config);

struct Cohort {
  std::string cohort_id;
  std::vector<std::string> members;  // sorted
  std::vector<ImagePair> provenance;  // same-pairs that merged it
};

struct CohortPartition {
  std::vector<Cohort> cohorts;
  std::vector<ImagePair> conflicts;  // same-pairs refused because of a cannot-link
  std::set<ImagePair> cannot_link;

  // image -> index into cohorts
  std::map<std::string, std::size_t> index() const;
};

nlohmann::json to_json(const CohortPartition& p);
CohortPartition partition_from_json(const nlohmann::json& j);

// Union-find over the same-pairs in canonical order, so the result does not
// depend on the order of the input lists.
CohortPartition merge_cohorts(const std::vector<std::string>& images, const std::vector<ImagePair>& same,
                              const std::vector<ImagePair>& different);

// Verified-same and cohort mates move to the top of each list, cannot-links
// to the bottom; every other candidate keeps its place.
std::vector<RankedList> apply_cohorts(const std::vector<RankedList>& rankings, const CohortPartition& partition);

struct SubmitResult {
  bool accepted = false;
  bool duplicate = false;
  std::optional<Label> consensus;
};

// Task queue with redundancy, self-selection and gold injection. Every
// mutation is deterministic, so replaying the same calls rebuilds the state.
class TaskBoard {
 public:
  explicit TaskBoard(FeedbackConfig config = {});

  const FeedbackConfig& config() const { return config_; }

  void add_annotator(const std::string& id);
  // Gold pairs with known answers; served to annotators every gold_every-th task.
  void add_gold(const ImagePair& pair, Label truth);

  // Fails with conflict if the pair already has a live task.
  std::string add_task(const ImagePair& pair, int iteration = 0);

  // Up to max tasks the annotator has not answered, gold injected on cadence.
  // Inactive annotators get nothing.
  std::vector<VerificationTask> fetch(const std::string& annotator, std::size_t max);

  SubmitResult respond(const std::string& annotator, const std::string& task_id, Label label,
                       std::int64_t timestamp);

  void expire(const std::string& task_id);

  const VerificationTask& task(const std::string& id) const;
  std::vector<VerificationTask> tasks(bool include_gold = false) const;
  std::vector<VerificationTask> open_tasks() const;
  const std::map<std::string, AnnotatorProfile>& profiles() const { return profiles_; }
  std::size_t open_count() const;
  std::size_t active_annotators() const;

  nlohmann::json to_json() const;
  static TaskBoard from_json(const nlohmann::json& j);

 private:
  bool needs_response_from(const VerificationTask& t, const std::string& annotator) const;
  VerificationTask& mutable_task(const std::string& id);
  std::string next_id(const char* prefix);

  FeedbackConfig config_;
  std::map<std::string, VerificationTask> tasks_;
  std::map<ImagePair, std::string> live_pair_;
  std::vector<std::pair<ImagePair, Label>> gold_pool_;
  std::map<std::string, AnnotatorProfile> profiles_;
  // annotator -> gold task ids handed out but not yet answered
  std::map<std::string, std::set<std::string>> pending_gold_;
  std::uint64_t counter_ = 0;
};

// Annotator behaviour used for simulations and oracle runs.
class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual const std::string& id() const = 0;
  // nullopt means skip.
  virtual std::optional<Label> judge(const VerificationTask& task) = 0;
};

// image id -> identity
using IdentityOracle = std::map<std::string, int>;

Label true_label(const IdentityOracle& truth, const ImagePair& pair);

class OracleAnnotator : public Annotator {
 public:
  OracleAnnotator(std::string id, const IdentityOracle* truth) : id_(std::move(id)), truth_(truth) {}
  const std::string& id() const override { return id_; }
  std::optional<Label> judge(const VerificationTask& task) override;

 private:
  std::string id_;
  const IdentityOracle* truth_;
};

// Correct with probability `accuracy`; skips with probability `skip`.
class SimulatedAnnotator : public Annotator {
 public:
  SimulatedAnnotator(std::string id, const IdentityOracle* truth, double accuracy, std::uint64_t seed,
                     double skip = 0.0)
      : id_(std::move(id)), truth_(truth), accuracy_(accuracy), skip_(skip), rng_(seed) {}
  const std::string& id() const override { return id_; }
  std::optional<Label> judge(const VerificationTask& task) override;

 private:
  std::string id_;
  const IdentityOracle* truth_;
  double accuracy_;
  double skip_;
  Rng rng_;
};

// Gold pairs drawn from known identities: half same, half different.
std::vector<std::pair<ImagePair, Label>> make_gold_pairs(const IdentityOracle& truth, std::size_t count,
                                                        std::uint64_t seed);

}  // namespace sloop

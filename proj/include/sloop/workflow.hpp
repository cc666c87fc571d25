#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace sloop {

enum class Executor { machine, human };

const char* to_string(Executor e);

struct WorkflowEdge {
  std::string from;
  std::string to;
  std::string step;
  Executor executor = Executor::machine;
  std::string payload_schema = "none";
  bool optional = false;  // an optional human edge never blocks indexing
};

// Species workflow: a finite state machine from "raw" to "indexed".
// Immutable once loaded.
struct WorkflowDef {
  std::string name;
  std::vector<std::string> states;
  std::vector<WorkflowEdge> edges;
  std::string initial = "raw";
  std::string terminal = "indexed";
  // Matching across views is off unless the workflow says otherwise.
  std::string view_policy = "within_view";
  // Work for these steps is held back while any image of the workflow is
  // still upstream of the step, so batch matching sees the whole pool.
  std::vector<std::string> barrier_steps;
  // Matcher, cascade and feedback parameters (see workflows/*.cfg).
  nlohmann::json params = nlohmann::json::object();

  bool has_state(const std::string& s) const;
  const WorkflowEdge* find_edge(const std::string& from, const std::string& to) const;
  const WorkflowEdge* find_step(const std::string& step) const;
  // States from which `state` can be reached (excluding itself).
  std::vector<std::string> upstream_of(const std::string& state) const;
};

struct NextStep {
  std::string step;
  Executor executor = Executor::machine;
  std::string to;

  friend bool operator==(const NextStep&, const NextStep&) = default;
};

inline const std::vector<std::string> kPayloadSchemas = {"none", "fiducials", "feature_set", "rankings",
                                                         "verification", "cohort"};

// Empty iff every structural invariant holds. Reachability by BFS.
std::vector<std::string> validate_workflow(const WorkflowDef& def);

// Parses the YAML-syntax workflow document and validates it; throws a
// validation error naming the offending element(s).
WorkflowDef load_workflow(const std::string& document);
WorkflowDef load_workflow_file(const std::filesystem::path& path);

// Shipped definitions from the workflows/ directory.
std::filesystem::path workflow_dir();
WorkflowDef builtin_workflow(const std::string& name);

// Out-edges of `state` in declaration order.
std::vector<NextStep> next_steps(const std::string& state, const WorkflowDef& def);

// Throws validation_error when the payload does not satisfy the schema.
void validate_payload(const std::string& schema, const nlohmann::json& payload);

nlohmann::json to_json(const WorkflowDef& def);

}  // namespace sloop

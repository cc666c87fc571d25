#include "sloop/workflow.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "sloop/config.hpp"
#include "sloop/error.hpp"

namespace sloop {

const char* to_string(Executor e) { return e == Executor::machine ? "machine" : "human"; }

bool WorkflowDef::has_state(const std::string& s) const {
  return std::find(states.begin(), states.end(), s) != states.end();
}

const WorkflowEdge* WorkflowDef::find_edge(const std::string& from, const std::string& to) const {
  for (const auto& e : edges) {
    if (e.from == from && e.to == to) return &e;
  }
  return nullptr;
}

const WorkflowEdge* WorkflowDef::find_step(const std::string& step) const {
  for (const auto& e : edges) {
    if (e.step == step) return &e;
  }
  return nullptr;
}

namespace {

std::set<std::string> reach(const std::string& start, const std::vector<WorkflowEdge>& edges, bool reverse) {
  std::set<std::string> seen{start};
  std::deque<std::string> queue{start};
  while (!queue.empty()) {
    const auto s = queue.front();
    queue.pop_front();
    for (const auto& e : edges) {
      const auto& from = reverse ? e.to : e.from;
      const auto& to = reverse ? e.from : e.to;
      if (from == s && seen.insert(to).second) queue.push_back(to);
    }
  }
  return seen;
}

}  // namespace

std::vector<std::string> WorkflowDef::upstream_of(const std::string& state) const {
  auto up = reach(state, edges, true);
  up.erase(state);
  return {up.begin(), up.end()};
}

std::vector<std::string> validate_workflow(const WorkflowDef& def) {
  std::vector<std::string> v;
  if (def.name.empty()) v.push_back("missing: name");
  std::set<std::string> states;
  for (const auto& s : def.states) {
    if (!states.insert(s).second) v.push_back("duplicate state: " + s);
  }
  if (!states.count(def.initial)) v.push_back("missing state: " + def.initial);
  if (!states.count(def.terminal)) v.push_back("missing state: " + def.terminal);

  std::set<std::string> steps;
  std::vector<WorkflowEdge> valid_edges;
  for (const auto& e : def.edges) {
    bool ok = true;
    if (!states.count(e.from)) {
      v.push_back("unknown state in edge '" + e.step + "': " + e.from);
      ok = false;
    }
    if (!states.count(e.to)) {
      v.push_back("unknown state in edge '" + e.step + "': " + e.to);
      ok = false;
    }
    if (e.step.empty()) v.push_back("edge " + e.from + "->" + e.to + " has no step name");
    if (!steps.insert(e.step).second) v.push_back("duplicate step: " + e.step);
    if (std::find(kPayloadSchemas.begin(), kPayloadSchemas.end(), e.payload_schema) == kPayloadSchemas.end()) {
      v.push_back("unknown payload schema in step '" + e.step + "': " + e.payload_schema);
    }
    if (e.from == def.terminal) v.push_back("edge out of terminal state: " + e.step);
    if (ok) valid_edges.push_back(e);
  }
  if (!states.count(def.initial) || !states.count(def.terminal)) return v;

  const auto forward = reach(def.initial, valid_edges, false);
  const auto backward = reach(def.terminal, valid_edges, true);
  for (const auto& s : def.states) {
    if (!forward.count(s)) v.push_back("unreachable: " + s);
    if (!backward.count(s)) v.push_back("no path to " + def.terminal + ": " + s);
    if (s != def.terminal) {
      const bool has_out = std::any_of(valid_edges.begin(), valid_edges.end(),
                                       [&](const WorkflowEdge& e) { return e.from == s && e.to != s; });
      if (!has_out) v.push_back("terminal state other than " + def.terminal + ": " + s);
    }
  }
  for (const auto& b : def.barrier_steps) {
    if (!def.find_step(b)) v.push_back("unknown barrier step: " + b);
  }
  if (def.view_policy != "within_view" && def.view_policy != "across_views") {
    v.push_back("unknown view_policy: " + def.view_policy);
  }
  return v;
}

namespace {

std::string required_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw validation_error("workflow: " + where + " missing string field '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

WorkflowDef load_workflow(const std::string& document) {
  const nlohmann::json doc = parse_config(document);
  if (!doc.is_object()) throw validation_error("workflow: document must be a mapping");
  WorkflowDef def;
  def.name = required_string(doc, "name", "document");
  if (!doc.contains("states") || !doc.at("states").is_array()) throw validation_error("workflow: missing states list");
  for (const auto& s : doc.at("states")) {
    if (!s.is_string()) throw validation_error("workflow: state names must be strings");
    def.states.push_back(s.get<std::string>());
  }
  if (!doc.contains("edges") || !doc.at("edges").is_array()) throw validation_error("workflow: missing edges list");
  for (const auto& e : doc.at("edges")) {
    WorkflowEdge edge;
    edge.from = required_string(e, "from", "edge");
    edge.to = required_string(e, "to", "edge");
    edge.step = required_string(e, "step", "edge");
    const auto exec = required_string(e, "executor", "edge '" + edge.step + "'");
    if (exec == "machine") {
      edge.executor = Executor::machine;
    } else if (exec == "human") {
      edge.executor = Executor::human;
    } else {
      throw validation_error("workflow: edge '" + edge.step + "' has unknown executor: " + exec);
    }
    edge.payload_schema = e.value("payload_schema", std::string("none"));
    edge.optional = e.value("optional", false);
    def.edges.push_back(edge);
  }
  def.view_policy = doc.value("view_policy", def.view_policy);
  if (doc.contains("barrier_steps")) {
    for (const auto& b : doc.at("barrier_steps")) def.barrier_steps.push_back(b.get<std::string>());
  }
  if (doc.contains("params") && doc.at("params").is_object()) def.params = doc.at("params");
  const auto violations = validate_workflow(def);
  if (!violations.empty()) {
    std::string msg = "workflow '" + def.name + "' invalid: ";
    for (std::size_t i = 0; i < violations.size(); ++i) msg += (i ? "; " : "") + violations[i];
    throw validation_error(msg);
  }
  return def;
}

WorkflowDef load_workflow_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open workflow " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_workflow(ss.str());
}

std::filesystem::path workflow_dir() {
  if (const char* env = std::getenv("SLOOP_WORKFLOW_DIR")) return env;
#ifdef SLOOP_WORKFLOW_DIR
  return SLOOP_WORKFLOW_DIR;
#else
  return "workflows";
#endif
}

WorkflowDef builtin_workflow(const std::string& name) {
  const auto path = workflow_dir() / (name + ".cfg");
  if (!std::filesystem::exists(path)) throw not_found("no shipped workflow named '" + name + "'");
  return load_workflow_file(path);
}

std::vector<NextStep> next_steps(const std::string& state, const WorkflowDef& def) {
  if (!def.has_state(state)) throw validation_error("unknown state: " + state);
  std::vector<NextStep> out;
  for (const auto& e : def.edges) {
    if (e.from == state) out.push_back({e.step, e.executor, e.to});
  }
  return out;
}

void validate_payload(const std::string& schema, const nlohmann::json& payload) {
  auto need = [&](const char* key, auto pred, const char* what) {
    if (!payload.is_object() || !payload.contains(key) || !pred(payload.at(key))) {
      throw validation_error("payload for schema '" + schema + "' needs " + what);
    }
  };
  if (schema == "none") return;
  if (schema == "fiducials") {
    need("fiducials", [](const nlohmann::json& f) {
      if (!f.is_array()) return false;
      return std::all_of(f.begin(), f.end(), [](const nlohmann::json& p) {
        return p.is_array() && p.size() == 2 && p[0].is_number() && p[1].is_number();
      });
    }, "'fiducials': [[x, y], ...]");
  } else if (schema == "feature_set") {
    need("feature_set", [](const nlohmann::json& f) { return f.is_string() && !f.get<std::string>().empty(); },
         "a 'feature_set' reference");
  } else if (schema == "rankings") {
    need("rankings", [](const nlohmann::json& f) { return f.is_string() && !f.get<std::string>().empty(); },
         "a 'rankings' reference");
  } else if (schema == "verification") {
    need("tasks", [](const nlohmann::json& f) { return f.is_array(); }, "a 'tasks' array");
  } else if (schema == "cohort") {
    need("cohort_id", [](const nlohmann::json& f) { return f.is_string() && !f.get<std::string>().empty(); },
         "a 'cohort_id'");
  } else {
    throw validation_error("unknown payload schema: " + schema);
  }
}

nlohmann::json to_json(const WorkflowDef& def) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : def.edges) {
    edges.push_back({{"from", e.from}, {"to", e.to}, {"step", e.step}, {"executor", to_string(e.executor)},
                     {"payload_schema", e.payload_schema}, {"optional", e.optional}});
  }
  return {{"name", def.name}, {"states", def.states}, {"edges", edges}, {"view_policy", def.view_policy},
          {"barrier_steps", def.barrier_steps}, {"params", def.params}};
}

}  // namespace sloop

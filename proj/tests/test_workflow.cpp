#include <doctest.h>

#include "sloop/error.hpp"
#include "sloop/workflow.hpp"

using namespace sloop;

namespace {

const char* kMinimal = R"(
name: tiny
states: [raw, featured, indexed]
edges:
  - {from: raw, to: featured, step: extract, executor: machine, payload_schema: feature_set}
  - {from: featured, to: indexed, step: index, executor: machine, payload_schema: cohort}
)";

std::string with(const std::string& extra_edges, const std::string& states = "[raw, featured, indexed]") {
  return "name: tiny\nstates: " + states +
         "\nedges:\n"
         "  - {from: raw, to: featured, step: extract, executor: machine, payload_schema: feature_set}\n"
         "  - {from: featured, to: indexed, step: index, executor: machine, payload_schema: cohort}\n" +
         extra_edges;
}

std::string error_of(const std::string& doc) {
  try {
    load_workflow(doc);
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("workflow") {
  TEST_CASE("shipped workflows load and validate") {
    for (const char* name : {"default", "synthetic"}) {
      const auto wf = builtin_workflow(name);
      CHECK(wf.name == name);
      CHECK(validate_workflow(wf).empty());
      CHECK(wf.has_state("raw"));
      CHECK(wf.has_state("indexed"));
      CHECK(wf.barrier_steps == std::vector<std::string>{"match"});
    }
    CHECK_THROWS_AS(builtin_workflow("no-such-species"), Error);
  }

  TEST_CASE("next steps follow declaration order") {
    const auto wf = builtin_workflow("default");
    const auto steps = next_steps("preprocessed", wf);
    REQUIRE(steps.size() == 2);
    CHECK(steps[0] == NextStep{"enter_fiducials", Executor::human, "preprocessed"});
    CHECK(steps[1] == NextStep{"extract", Executor::machine, "featured"});
    CHECK(next_steps("indexed", wf).empty());
    CHECK(next_steps("matched", wf) == std::vector<NextStep>{{"verify", Executor::human, "pending_verification"}});
    CHECK(wf.find_edge("featured", "matched")->step == "match");
    CHECK(wf.find_edge("raw", "indexed") == nullptr);
    const auto up = wf.upstream_of("matched");
    CHECK(std::find(up.begin(), up.end(), "raw") != up.end());
    CHECK(std::find(up.begin(), up.end(), "indexed") == up.end());
  }

  TEST_CASE("structural errors are named") {
    CHECK_NOTHROW(load_workflow(kMinimal));
    CHECK(error_of(with("", "[raw, featured, indexed, limbo]")).find("unreachable: limbo") != std::string::npos);
    CHECK(error_of(with("  - {from: featured, to: nowhere, step: lost, executor: machine}\n"))
              .find("unknown state") != std::string::npos);
    CHECK(error_of(with("  - {from: featured, to: indexed, step: extract, executor: machine}\n"))
              .find("duplicate step: extract") != std::string::npos);
    CHECK(error_of(with("  - {from: raw, to: featured, step: odd, executor: machine, payload_schema: bogus}\n"))
              .find("unknown payload schema") != std::string::npos);
    CHECK(error_of(with("  - {from: indexed, to: raw, step: back, executor: machine}\n"))
              .find("edge out of terminal") != std::string::npos);
    CHECK(error_of(with("  - {from: featured, to: dead, step: die, executor: machine}\n",
                        "[raw, featured, dead, indexed]"))
              .find("dead") != std::string::npos);
    CHECK(error_of("name: x\nstates: [raw]\nedges: []\n").find("missing state: indexed") != std::string::npos);
    CHECK_FALSE(error_of("states: [raw, indexed\n").empty());
  }

  TEST_CASE("round trip through json") {
    const auto wf = builtin_workflow("synthetic");
    const auto j = to_json(wf);
    const auto back = load_workflow(j.dump());
    CHECK(to_json(back) == j);
  }

  TEST_CASE("payload schemas") {
    CHECK_NOTHROW(validate_payload("none", nullptr));
    CHECK_NOTHROW(validate_payload("fiducials", {{"fiducials", {{1.0, 2.0}, {3, 4}}}}));
    CHECK_THROWS_AS(validate_payload("fiducials", {{"fiducials", {{1.0}}}}), Error);
    CHECK_THROWS_AS(validate_payload("fiducials", nlohmann::json::object()), Error);
    CHECK_NOTHROW(validate_payload("feature_set", {{"feature_set", "sha256:ab"}}));
    CHECK_THROWS_AS(validate_payload("feature_set", {{"feature_set", ""}}), Error);
    CHECK_NOTHROW(validate_payload("rankings", {{"rankings", "r"}}));
    CHECK_NOTHROW(validate_payload("verification", {{"tasks", nlohmann::json::array()}}));
    CHECK_THROWS_AS(validate_payload("verification", {{"tasks", 3}}), Error);
    CHECK_NOTHROW(validate_payload("cohort", {{"cohort_id", "c:1"}}));
    CHECK_THROWS_AS(validate_payload("cohort", {{"cohort", "c:1"}}), Error);
    CHECK_THROWS_AS(validate_payload("mystery", nullptr), Error);
  }
}

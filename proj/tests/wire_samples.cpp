// Drives a live DEI and name service over HTTP and writes every request and
// response body to <out>/<schema>.<n>.json for schema validation.
#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "dei_fixture.hpp"
#include "sloop/dei/http_server.hpp"
#include "sloop/dei/nameservice.hpp"
#include "sloop/metrics.hpp"
#include "sloop/synthpop.hpp"

using namespace sloop;
using nlohmann::json;

namespace {

class Sink {
 public:
  explicit Sink(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  void put(const std::string& schema, const json& body) {
    const int n = counts_[schema]++;
    std::ofstream(dir_ / (schema + "." + std::to_string(n) + ".json")) << body.dump(2) << "\n";
  }

  // Records the response body; the status must match.
  json take(const std::string& schema, const httplib::Result& r, int status = 200) {
    if (!r) throw std::runtime_error("no response for " + schema);
    if (r->status != status) {
      throw std::runtime_error(schema + ": status " + std::to_string(r->status) + " body " + r->body);
    }
    const auto j = json::parse(r->body);
    put(schema, j);
    return j;
  }

 private:
  std::filesystem::path dir_;
  std::map<std::string, int> counts_;
};

std::string pgm_string(std::uint64_t seed) {
  const auto b = test::tiny_pgm(seed);
  return std::string(b.begin(), b.end());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: wire_samples <out-dir>\n";
    return 2;
  }
  try {
    Sink sink(argv[1]);
    test::DeiFixture fx("wire");
    dei::DeiHttpServer server(*fx.svc);
    const int port = server.start("127.0.0.1", 0);
    httplib::Client c("127.0.0.1", port);

    sink.take("health", c.Get("/api/v1/health"));
    const json auth = {{"principal", "admin"}, {"secret", "admin-secret"}, {"capabilities", test::kAllCaps}};
    sink.put("auth_request", auth);
    const auto session = sink.take("session", c.Post("/api/v1/auth", auth.dump(), "application/json"));
    const httplib::Headers h = {{"Authorization", "Bearer " + session.at("token").get<std::string>()}};

    sink.take("error", c.Get("/api/v1/work?max=1"), 401);
    sink.take("error", c.Get("/api/v1/images/img000404"), 404);
    sink.take("error", c.Post("/api/v1/auth", "{", "application/json"), 400);
    sink.take("workflow", c.Get("/api/v1/workflows/default"));

    std::vector<std::string> ids;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const json meta = {{"workflow", "default"},
                         {"capture_date", "2024-05-0" + std::to_string(seed)},
                         {"location", "pond"},
                         {"view", "left"},
                         {"fiducials", {{3.0, 4.0}, {10.5, 12.0}}}};
      httplib::MultipartFormDataItems form = {{"blob", pgm_string(seed), "x.pgm", "application/octet-stream"},
                                              {"metadata", meta.dump(), "", "application/json"}};
      ids.push_back(sink.take("image_created", c.Post("/api/v1/images", h, form), 201).at("image_id"));
    }
    sink.take("blob_created", c.Post("/api/v1/blobs", h, "abc", "application/octet-stream"), 201);
    sink.take("image_list", c.Get("/api/v1/images?workflow=default&state=raw"));

    // Walk every image to indexed through polled work.
    const auto def = fx.svc->workflow("default");
    for (int round = 0; round < 64; ++round) {
      const auto work = sink.take("work_list", c.Get("/api/v1/work?max=8", h));
      if (work.empty()) break;
      sink.put("work_item", work.at(0));
      for (const auto& w : work) {
        const auto* e = def.find_edge(w.at("from_state"), w.at("to_state"));
        json payload = test::valid_payload(*fx.svc, fx.admin, w.at("image_id"), *e);
        if (e->payload_schema == "rankings") {
          std::vector<json> items;
          for (const auto& other : ids) {
            if (other != w.at("image_id")) items.push_back({{"candidate_id", other}, {"score", 0.5}, {"tier", 1}});
          }
          const json scores = {{"query_id", w.at("image_id")}, {"items", items}, {"debug", {{"expensive_calls", 2}}}};
          sink.put("scores_request", scores);
          sink.take("ok", c.Post("/api/v1/scores", h, scores.dump(), "application/json"));
        }
        const json move = {{"image_id", w.at("image_id")}, {"from", w.at("from_state")}, {"to", w.at("to_state")},
                           {"payload", payload}};
        sink.put("transition_request", move);
        sink.take("transition_result", c.Post("/api/v1/transitions", h, move.dump(), "application/json"));
      }
    }
    for (const auto& id : ids) sink.take("image", c.Get("/api/v1/images/" + id, h));
    sink.take("ranking", c.Get("/api/v1/rankings/" + ids[0] + "?k=1", h));
    sink.take("ranking", c.Get("/api/v1/rankings/" + ids[0] + "?debug=1", h));

    const json create = {{"pairs", json::array({json::array({ids[0], ids[1]}), json::array({ids[1], ids[2]})})},
                         {"iteration", 1}};
    sink.put("task_create_request", create);
    const auto created =
        sink.take("task_create_result", c.Post("/api/v1/tasks", h, create.dump(), "application/json"), 201);
    const json gold = {{"pair", json::array({ids[0], ids[2]})}, {"truth", "different"}};
    sink.put("gold_request", gold);
    sink.take("ok", c.Post("/api/v1/gold", h, gold.dump(), "application/json"), 201);
    sink.take("task_list", c.Get("/api/v1/tasks?annotator=w1&max=5", h));
    const std::string t0 = created.at("task_ids").at(0);
    for (const char* who : {"w1", "w2", "w2"}) {
      const json resp = {{"annotator", who}, {"label", "same"}};
      sink.put("response_request", resp);
      sink.take("response_result", c.Post("/api/v1/tasks/" + t0 + "/response", h, resp.dump(), "application/json"));
    }
    sink.take("task", c.Get("/api/v1/tasks/" + t0, h));
    sink.take("task_list", c.Get("/api/v1/tasks", h));
    for (const auto& a : sink.take("annotator_list", c.Get("/api/v1/annotators", h))) sink.put("annotator", a);

    const auto partition = merge_cohorts(ids, {make_pair_key(ids[0], ids[1])}, {make_pair_key(ids[0], ids[2])});
    sink.put("cohorts", to_json(partition));
    sink.take("ok", c.Post("/api/v1/cohorts", h, to_json(partition).dump(), "application/json"));
    sink.take("cohorts", c.Get("/api/v1/cohorts", h));

    const json weights = {{"descriptor_cosine", 0.2}, {"deformation", 0.8}};
    sink.put("weights", weights);
    sink.take("ok", c.Post("/api/v1/weights/default", h, weights.dump(), "application/json"));
    sink.take("weights", c.Get("/api/v1/weights/default", h));

    std::vector<MetricsRow> rows = {{0, 0.91, 0.7, 0.95, 0, 120, 0}, {1, 0.93, 0.75, 0.96, 2, 240, 0}};
    json row_docs = json::array();
    for (const auto& r : rows) {
      row_docs.push_back(to_json(r));
      sink.put("metrics_row", row_docs.back());
    }
    sink.take("ok", c.Post("/api/v1/docs/metrics_rows", h, row_docs.dump(), "application/json"));
    sink.take("metrics", c.Get("/api/v1/metrics", h));
    server.stop();

    SyntheticSpec spec;
    sink.put("synthetic_spec", to_json(spec));

    dei::NameServiceServer ns;
    const int ns_port = ns.start("127.0.0.1", 0);
    httplib::Client nc("127.0.0.1", ns_port);
    const json desc = to_json(dei::DeiDescriptor{"dei-a", "http://127.0.0.1:1", {"default"}, 0});
    sink.put("descriptor", desc);
    sink.take("registration_result", nc.Post("/api/v1/register", desc.dump(), "application/json"));
    sink.take("registration_result", nc.Post("/api/v1/heartbeat/dei-a", "", "application/json"));
    sink.take("descriptor_list", nc.Get("/api/v1/services"));
    sink.take("error", nc.Post("/api/v1/register", R"({"name":"x"})", "application/json"), 400);
    ns.stop();
  } catch (const std::exception& e) {
    std::cerr << "wire_samples: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <doctest.h>

#include <httplib.h>

#include "dei_fixture.hpp"
#include "sloop/dei/api.hpp"
#include "sloop/dei/http_server.hpp"
#include "sloop/dei/nameservice.hpp"
#include "sloop/error.hpp"

using namespace sloop;
using namespace sloop::dei;

namespace {

struct Served {
  explicit Served(const std::string& tag) : fx(tag), server(*fx.svc) {
    port = server.start("127.0.0.1", 0);
    base = "http://127.0.0.1:" + std::to_string(port);
  }
  test::DeiFixture fx;
  DeiHttpServer server;
  int port = 0;
  std::string base;
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::internal;
}

}  // namespace

TEST_SUITE("http") {
  TEST_CASE("status mapping") {
    CHECK(http_status(ErrorCode::validation) == 400);
    CHECK(http_status(ErrorCode::authentication) == 401);
    CHECK(http_status(ErrorCode::authorization) == 403);
    CHECK(http_status(ErrorCode::not_found) == 404);
    CHECK(http_status(ErrorCode::conflict) == 409);
    CHECK(http_status(ErrorCode::unavailable) == 503);
    CHECK(http_status(ErrorCode::internal) == 500);
  }

  TEST_CASE("raw requests get json errors with the right status") {
    Served s("http-raw");
    httplib::Client c("127.0.0.1", s.port);
    auto r = c.Get("/api/v1/health");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(nlohmann::json::parse(r->body).at("status") == "ok");

    r = c.Get("/api/v1/work?max=3");
    REQUIRE(r);
    CHECK(r->status == 401);
    const auto err = nlohmann::json::parse(r->body);
    CHECK(err.contains("error"));
    CHECK(err.contains("message"));

    r = c.Post("/api/v1/auth", "{not json", "application/json");
    CHECK(r->status == 400);
    r = c.Post("/api/v1/auth", R"({"principal":"ipe","secret":"x","capabilities":["extract"]})", "application/json");
    CHECK(r->status == 401);
    r = c.Post("/api/v1/auth", R"({"principal":"ipe","secret":"ipe-secret","capabilities":["verify"]})",
               "application/json");
    CHECK(r->status == 403);
    r = c.Get("/api/v1/images/img424242");
    CHECK(r->status == 404);
    r = c.Get("/api/v1/workflows/default");
    CHECK(r->status == 200);
    CHECK(nlohmann::json::parse(r->body).at("name") == "default");

    httplib::Headers auth = {{"Authorization", "Bearer " + s.fx.admin}};
    r = c.Get("/api/v1/work?max=abc", auth);
    CHECK(r->status == 400);

    const auto bytes = test::tiny_pgm(3);
    httplib::MultipartFormDataItems form = {
        {"blob", std::string(bytes.begin(), bytes.end()), "a.pgm", "application/octet-stream"},
        {"metadata", R"({"workflow":"default","view":"left","fiducials":[[3,4]]})", "", "application/json"}};
    r = c.Post("/api/v1/images", auth, form);
    REQUIRE(r);
    CHECK(r->status == 201);
    const auto id = nlohmann::json::parse(r->body).at("image_id").get<std::string>();
    CHECK(s.fx.svc->get_image(id).fiducials.size() == 1);
    r = c.Get("/api/v1/images/" + id + "/blob");
    CHECK(std::vector<std::uint8_t>(r->body.begin(), r->body.end()) == bytes);

    const std::string move = R"({"image_id":")" + id + R"(","from":"preprocessed","to":"featured","payload":{}})";
    r = c.Post("/api/v1/transitions", auth, move, "application/json");
    CHECK(r->status == 409);
    r = c.Get("/api/v1/metrics?format=csv");
    CHECK(r->status == 200);
    CHECK(r->body.rfind("iteration,auc", 0) == 0);
  }

  TEST_CASE("the http client sees the same service as local calls") {
    Served s("http-api");
    auto remote = make_http_api(s.base);
    auto local = make_local_api(*s.fx.svc);
    remote->login("admin", "admin-secret", test::kAllCaps);
    local->login("admin", "admin-secret", test::kAllCaps);

    ImageMetadata m{"2024-02-03", "creek", "left"};
    const auto a = remote->put_image(test::tiny_pgm(1), "default", m, {{5.0, 6.0}});
    const auto b = local->put_image(test::tiny_pgm(2), "default", m, {});
    CHECK(to_json(remote->get_image(b)) == to_json(local->get_image(b)));
    CHECK(remote->list_images("default", "raw").size() == 2);
    const std::vector<std::uint8_t> bytes = {9, 8, 7};
    const auto ref = remote->put_blob(bytes);
    CHECK(local->get_blob(ref) == bytes);

    const auto work = remote->poll_work(10);
    REQUIRE(work.size() == 2);
    for (const auto& w : work) {
      CHECK(remote->commit_transition(w.image_id, w.from_state, w.to_state, {{"fiducials", {{1.0, 1.0}}}}) ==
            "preprocessed");
    }
    CHECK(code_of([&] { remote->commit_transition(a, "raw", "preprocessed", {{"fiducials", {}}}); }) ==
          ErrorCode::conflict);
    CHECK(code_of([&] { remote->get_image("img999999"); }) == ErrorCode::not_found);

    remote->put_scores(RankedList{a, {{b, 0.4, 1}}}, {{"stats", {{"expensive_calls", 1}}}});
    CHECK(local->get_rankings(a, 0).items.at(0).candidate_id == b);
    CHECK(remote->get_rankings(a, 1).items.size() == 1);
    CHECK(remote->get_ranking_debug(a).at("stats").at("expensive_calls") == 1);

    const auto tasks = remote->create_tasks({{a, b}}, 1);
    REQUIRE(tasks.size() == 1);
    remote->add_gold({a, b}, Label::same);
    const auto mine = remote->get_tasks("w1", 5);
    REQUIRE_FALSE(mine.empty());
    CHECK_FALSE(mine[0].truth.has_value());
    CHECK(remote->respond(tasks[0], "w1", Label::same).accepted);
    CHECK(remote->respond(tasks[0], "w1", Label::same).duplicate);
    CHECK(remote->respond(tasks[0], "w2", Label::same).consensus == Label::same);
    CHECK(remote->list_tasks().size() == 1);
    CHECK(remote->annotators().size() == 2);

    remote->put_cohorts(merge_cohorts({a, b}, {{a, b}}, {}));
    CHECK(local->get_cohorts().cohorts.size() == 1);
    EnsembleWeights w;
    w.w = {{Method::ransac, 0.5}, {Method::deformation, 0.5}};
    remote->put_weights("default", w);
    CHECK(remote->get_weights("default")->w == w.w);
    CHECK_FALSE(remote->get_weights("synthetic"));
    remote->put_doc("d", {{"x", 2}});
    CHECK(remote->get_doc("d")->at("x") == 2);
    CHECK_FALSE(remote->get_doc("nope"));
    CHECK(remote->workflow("default").edges.size() == local->workflow("default").edges.size());
  }

  TEST_CASE("unreachable server maps to unavailable") {
    auto api = make_http_api("http://127.0.0.1:1");
    CHECK(code_of([&] { api->login("a", "b", {"x"}); }) == ErrorCode::unavailable);
  }
}

TEST_SUITE("nameservice") {
  TEST_CASE("registration is idempotent and validated") {
    NameRegistry reg;
    DeiDescriptor d{"dei-a", "http://h:1", {"default"}, 0};
    CHECK(reg.register_dei(d, 1));
    CHECK_FALSE(reg.register_dei(d, 2));
    CHECK(reg.list().size() == 1);
    CHECK(reg.list()[0].last_seen_ms == 2);
    d.address = "http://h:2";
    CHECK(reg.register_dei(d, 3));
    CHECK(reg.list().size() == 1);
    CHECK_THROWS_AS(reg.heartbeat("ghost", 4), Error);
    CHECK_THROWS_AS(descriptor_from_json({{"name", "x"}, {"address", "y"}, {"workflows", nlohmann::json::array()}}),
                    Error);
    CHECK_THROWS_AS(descriptor_from_json({{"name", "x"}, {"workflows", {"default"}}}), Error);
    CHECK(descriptor_from_json(to_json(d)) == d);
  }

  TEST_CASE("two DEIs list side by side over http") {
    NameServiceServer ns;
    const int port = ns.start("127.0.0.1", 0);
    NameServiceClient client("http://127.0.0.1:" + std::to_string(port));
    CHECK(client.register_dei({"dei-a", "http://a:1", {"default"}, 0}).status == RegistrationStatus::registered);
    CHECK(client.register_dei({"dei-b", "http://b:1", {"synthetic"}, 0}).status == RegistrationStatus::registered);
    client.heartbeat("dei-a");
    const auto all = client.list();
    REQUIRE(all.size() == 2);
    CHECK(all[0].name == "dei-a");
    CHECK(all[1].workflows == std::vector<std::string>{"synthetic"});
    CHECK_THROWS_AS(client.heartbeat("dei-zzz"), Error);
    CHECK_THROWS_AS(client.register_dei({"dei-c", "http://c:1", {}, 0}), Error);
    ns.stop();
  }

  TEST_CASE("unreachable name service degrades after backoff") {
    std::vector<std::chrono::milliseconds> slept;
    BackoffPolicy p;
    NameServiceClient client("http://127.0.0.1:1", p, [&](std::chrono::milliseconds d) { slept.push_back(d); });
    const auto r = client.register_dei({"dei-a", "http://a:1", {"default"}, 0});
    CHECK(r.status == RegistrationStatus::degraded);
    CHECK(r.attempts == p.max_attempts);
    CHECK_FALSE(r.last_error.empty());
    REQUIRE(slept.size() == static_cast<std::size_t>(p.max_attempts - 1));
    for (std::size_t i = 0; i < slept.size(); ++i) CHECK(slept[i] == backoff_delay(p, static_cast<int>(i) + 1));
    CHECK(backoff_delay(p, 1) == std::chrono::milliseconds(100));
    CHECK(backoff_delay(p, 3) == std::chrono::milliseconds(400));
    CHECK(backoff_delay(p, 20) == p.max_delay);
  }
}

#include <httplib.h>

#include "sloop/dei/api.hpp"
#include "sloop/error.hpp"

namespace sloop::dei {

namespace {

ErrorCode code_for_status(int status) {
  switch (status) {
    case 400: return ErrorCode::validation;
    case 401: return ErrorCode::authentication;
    case 403: return ErrorCode::authorization;
    case 404: return ErrorCode::not_found;
    case 409: return ErrorCode::conflict;
    case 503: return ErrorCode::unavailable;
    default: return ErrorCode::internal;
  }
}

std::string as_string(std::span<const std::uint8_t> bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

std::string with_query(const std::string& base, const httplib::Params& params) {
  return params.empty() ? base : base + "?" + httplib::detail::params_to_query_str(params);
}

class HttpApi final : public DeiApi {
 public:
  explicit HttpApi(const std::string& base_url) : client_(base_url), base_(base_url) {
    client_.set_connection_timeout(5);
    client_.set_read_timeout(300);
    client_.set_write_timeout(60);
  }

  Session login(const std::string& principal, const std::string& secret,
                const std::vector<std::string>& capabilities) override {
    const auto j = post_json("/api/v1/auth", {{"principal", principal}, {"secret", secret},
                                               {"capabilities", capabilities}});
    Session s;
    s.session_id = j.at("token").get<std::string>();
    s.principal = j.value("principal", principal);
    s.capabilities = j.value("capabilities", std::vector<std::string>{});
    s.expires_ms = j.value("expires_ms", std::int64_t{0});
    client_.set_bearer_token_auth(s.session_id);
    return s;
  }

  std::string put_image(std::span<const std::uint8_t> blob, const std::string& workflow,
                        const ImageMetadata& metadata, const std::vector<Point2>& fiducials) override {
    auto meta = to_json(metadata);
    meta["workflow"] = workflow;
    meta["fiducials"] = fiducials_to_json(fiducials);
    httplib::MultipartFormDataItems items = {
        {"blob", as_string(blob), "image", "application/octet-stream"},
        {"metadata", meta.dump(), "metadata.json", "application/json"},
    };
    auto res = client_.Post("/api/v1/images", items);
    return parse(res, "POST /api/v1/images").at("image_id").get<std::string>();
  }

  ImageRecord get_image(const std::string& id) override { return image_from_json(get_json("/api/v1/images/" + id)); }

  std::vector<ImageRecord> list_images(const std::string& wf, const std::string& state) override {
    httplib::Params p;
    if (!wf.empty()) p.emplace("workflow", wf);
    if (!state.empty()) p.emplace("state", state);
    std::vector<ImageRecord> out;
    for (const auto& j : get_json(with_query("/api/v1/images", p))) out.push_back(image_from_json(j));
    return out;
  }

  std::string put_blob(std::span<const std::uint8_t> bytes) override {
    auto res = client_.Post("/api/v1/blobs", as_string(bytes), "application/octet-stream");
    return parse(res, "POST /api/v1/blobs").at("ref").get<std::string>();
  }

  std::vector<std::uint8_t> get_blob(const std::string& ref) override {
    const auto body = get_raw("/api/v1/blobs/" + ref);
    return {body.begin(), body.end()};
  }

  std::vector<WorkItem> poll_work(std::size_t max_items) override {
    std::vector<WorkItem> out;
    for (const auto& j : get_json("/api/v1/work?max=" + std::to_string(max_items))) {
      out.push_back(work_item_from_json(j));
    }
    return out;
  }

  std::string commit_transition(const std::string& id, const std::string& from, const std::string& to,
                                const nlohmann::json& payload) override {
    return post_json("/api/v1/transitions", {{"image_id", id}, {"from", from}, {"to", to}, {"payload", payload}})
        .at("state")
        .get<std::string>();
  }

  void put_scores(const RankedList& ranking, const nlohmann::json& debug) override {
    auto body = to_json(ranking);
    if (!debug.is_null()) body["debug"] = debug;
    post_json("/api/v1/scores", body);
  }

  RankedList get_rankings(const std::string& id, std::size_t k) override {
    return ranked_list_from_json(get_json("/api/v1/rankings/" + id + "?k=" + std::to_string(k)));
  }

  nlohmann::json get_ranking_debug(const std::string& id) override {
    return get_json("/api/v1/rankings/" + id + "?k=1&debug=1").value("debug", nlohmann::json::object());
  }

  std::vector<std::string> create_tasks(const std::vector<ImagePair>& pairs, int iteration) override {
    nlohmann::json ps = nlohmann::json::array();
    for (const auto& [a, b] : pairs) ps.push_back({a, b});
    return post_json("/api/v1/tasks", {{"pairs", ps}, {"iteration", iteration}})
        .at("task_ids")
        .get<std::vector<std::string>>();
  }

  void add_gold(const ImagePair& pair, Label truth) override {
    post_json("/api/v1/gold", {{"pair", {pair.first, pair.second}}, {"truth", to_string(truth)}});
  }

  std::vector<VerificationTask> get_tasks(const std::string& annotator, std::size_t max) override {
    httplib::Params p{{"annotator", annotator}, {"max", std::to_string(max)}};
    return tasks(get_json(with_query("/api/v1/tasks", p)));
  }

  SubmitResult respond(const std::string& task_id, const std::string& annotator, Label label) override {
    const auto j = post_json("/api/v1/tasks/" + task_id + "/response",
                             {{"annotator", annotator}, {"label", to_string(label)}});
    SubmitResult r;
    r.accepted = j.at("accepted").get<bool>();
    r.duplicate = j.at("duplicate").get<bool>();
    if (!j.at("consensus").is_null()) r.consensus = label_from_string(j.at("consensus").get<std::string>());
    return r;
  }

  std::vector<VerificationTask> list_tasks() override { return tasks(get_json("/api/v1/tasks")); }

  std::vector<AnnotatorProfile> annotators() override {
    std::vector<AnnotatorProfile> out;
    for (const auto& j : get_json("/api/v1/annotators")) out.push_back(profile_from_json(j));
    return out;
  }

  void put_cohorts(const CohortPartition& p) override { post_json("/api/v1/cohorts", to_json(p)); }
  CohortPartition get_cohorts() override { return partition_from_json(get_json("/api/v1/cohorts")); }

  void put_weights(const std::string& wf, const EnsembleWeights& w) override {
    post_json("/api/v1/weights/" + wf, to_json(w));
  }
  std::optional<EnsembleWeights> get_weights(const std::string& wf) override {
    try {
      return weights_from_json(get_json("/api/v1/weights/" + wf));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::not_found) return std::nullopt;
      throw;
    }
  }

  void put_doc(const std::string& name, const nlohmann::json& value) override {
    post_json("/api/v1/docs/" + name, value);
  }
  std::optional<nlohmann::json> get_doc(const std::string& name) override {
    try {
      return get_json("/api/v1/docs/" + name);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::not_found) return std::nullopt;
      throw;
    }
  }

  WorkflowDef workflow(const std::string& name) override {
    return load_workflow(get_json("/api/v1/workflows/" + name).dump());
  }

 private:
  static std::vector<VerificationTask> tasks(const nlohmann::json& a) {
    std::vector<VerificationTask> out;
    for (const auto& j : a) out.push_back(task_from_json(j));
    return out;
  }

  void check(const httplib::Result& res, const std::string& what) {
    if (!res) {
      throw Error(ErrorCode::unavailable, what + " to " + base_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status >= 200 && res->status < 300) return;
    std::string message = res->body;
    try {
      message = nlohmann::json::parse(res->body).value("message", res->body);
    } catch (const nlohmann::json::exception&) {
    }
    throw Error(code_for_status(res->status), message);
  }

  nlohmann::json parse(const httplib::Result& res, const std::string& what) {
    check(res, what);
    return nlohmann::json::parse(res->body);
  }

  std::string get_raw(const std::string& path) {
    auto res = client_.Get(path);
    check(res, "GET " + path);
    return res->body;
  }

  nlohmann::json get_json(const std::string& path) { return nlohmann::json::parse(get_raw(path)); }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    return parse(client_.Post(path, body.dump(), "application/json"), "POST " + path);
  }

  httplib::Client client_;
  std::string base_;
};

}  // namespace

std::unique_ptr<DeiApi> make_http_api(const std::string& base_url) { return std::make_unique<HttpApi>(base_url); }

}  // namespace sloop::dei

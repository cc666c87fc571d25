#include "sloop/dei/http_server.hpp"

#include <httplib.h>

#include "sloop/error.hpp"
#include "sloop/log.hpp"

namespace sloop::dei {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::validation: return 400;
    case ErrorCode::authentication: return 401;
    case ErrorCode::authorization: return 403;
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::unavailable: return 503;
    case ErrorCode::io:
    case ErrorCode::internal: return 500;
  }
  return 500;
}

namespace {

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, {{"error", to_string(code)}, {"message", message}}, http_status(code));
}

// Exceptions become JSON error bodies with the mapped status.
Handler guarded(Handler h) {
  return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
    try {
      h(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, ErrorCode::validation, std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      log_error(std::string("request failed: ") + e.what());
      send_error(res, ErrorCode::internal, e.what());
    }
  };
}

std::string bearer(const httplib::Request& req) {
  const auto auth = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (auth.compare(0, prefix.size(), prefix) != 0) throw Error(ErrorCode::authentication, "missing bearer token");
  return auth.substr(prefix.size());
}

nlohmann::json body_json(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  return nlohmann::json::parse(req.body);
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto v = req.get_param_value(name);
  try {
    const long long n = std::stoll(v);
    if (n < 0) throw validation_error(std::string(name) + " must be >= 0");
    return static_cast<std::size_t>(n);
  } catch (const std::invalid_argument&) {
    throw validation_error(std::string(name) + " must be an integer");
  } catch (const std::out_of_range&) {
    throw validation_error(std::string(name) + " is out of range");
  }
}

nlohmann::json tasks_json(const std::vector<VerificationTask>& tasks) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& t : tasks) a.push_back(to_json(t, false));
  return a;
}

}  // namespace

DeiHttpServer::DeiHttpServer(DeiService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  routes();
}

DeiHttpServer::~DeiHttpServer() { stop(); }

void DeiHttpServer::routes() {
  auto& s = *server_;
  auto& svc = service_;

  s.Get("/api/v1/health", guarded([&](const httplib::Request&, httplib::Response& res) {
          send_json(res, {{"status", "ok"}, {"workflows", svc.workflow_names()}});
        }));

  s.Post("/api/v1/auth", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto j = body_json(req);
           const auto session = svc.authenticate(j.at("principal").get<std::string>(), j.at("secret").get<std::string>(),
                                                 j.at("capabilities").get<std::vector<std::string>>());
           send_json(res, to_json(session));
         }));

  s.Get(R"(/api/v1/workflows/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          send_json(res, to_json(svc.workflow(req.matches[1])));
        }));

  s.Post("/api/v1/images", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto token = bearer(req);
           if (!req.is_multipart_form_data() || !req.has_file("blob")) {
             throw validation_error("expected multipart form with a 'blob' part");
           }
           const auto blob = req.get_file_value("blob").content;
           nlohmann::json meta = nlohmann::json::object();
           if (req.has_file("metadata")) meta = nlohmann::json::parse(req.get_file_value("metadata").content);
           const auto workflow = meta.value("workflow", std::string("default"));
           const auto id = svc.put_image(
               token, std::span(reinterpret_cast<const std::uint8_t*>(blob.data()), blob.size()), workflow,
               metadata_from_json(meta), fiducials_from_json(meta.value("fiducials", nlohmann::json::array())));
           const auto rec = svc.get_image(id);
           send_json(res, {{"image_id", id}, {"blob_ref", rec.blob_ref}}, 201);
         }));

  s.Get("/api/v1/images", guarded([&](const httplib::Request& req, httplib::Response& res) {
          nlohmann::json a = nlohmann::json::array();
          for (const auto& r : svc.list_images(req.get_param_value("workflow"), req.get_param_value("state"))) {
            a.push_back(to_json(r));
          }
          send_json(res, a);
        }));

  s.Get(R"(/api/v1/images/([^/]+)/blob)", guarded([&](const httplib::Request& req, httplib::Response& res) {
          const auto rec = svc.get_image(req.matches[1]);
          const auto bytes = svc.get_blob(rec.blob_ref);
          res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
        }));

  s.Get(R"(/api/v1/images/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          send_json(res, to_json(svc.get_image(req.matches[1])));
        }));

  s.Post("/api/v1/blobs", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto ref = svc.put_blob(
               bearer(req), std::span(reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()));
           send_json(res, {{"ref", ref}}, 201);
         }));

  s.Get(R"(/api/v1/blobs/([0-9a-f]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          const auto bytes = svc.get_blob(req.matches[1]);
          res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
        }));

  s.Get("/api/v1/work", guarded([&](const httplib::Request& req, httplib::Response& res) {
          nlohmann::json a = nlohmann::json::array();
          for (const auto& w : svc.poll_work(bearer(req), size_param(req, "max", 1))) a.push_back(to_json(w));
          send_json(res, a);
        }));

  s.Post("/api/v1/transitions", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto j = body_json(req);
           const auto state = svc.commit_transition(bearer(req), j.at("image_id").get<std::string>(),
                                                    j.at("from").get<std::string>(), j.at("to").get<std::string>(),
                                                    j.value("payload", nlohmann::json::object()));
           send_json(res, {{"state", state}});
         }));

  s.Post("/api/v1/scores", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto j = body_json(req);
           svc.put_scores(bearer(req), ranked_list_from_json(j), j.value("debug", nlohmann::json::object()));
           send_json(res, {{"ok", true}});
         }));

  s.Get(R"(/api/v1/rankings/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          const std::string id = req.matches[1];
          auto body = to_json(svc.get_rankings(id, size_param(req, "k", 0)));
          if (req.get_param_value("debug") == "1") body["debug"] = svc.get_ranking_debug(id);
          send_json(res, body);
        }));

  s.Post("/api/v1/tasks", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto j = body_json(req);
           std::vector<ImagePair> pairs;
           for (const auto& p : j.at("pairs")) {
             pairs.push_back(make_pair_key(p.at(0).get<std::string>(), p.at(1).get<std::string>()));
           }
           const auto ids = svc.create_tasks(bearer(req), pairs, j.value("iteration", 0));
           send_json(res, {{"task_ids", ids}}, 201);
         }));

  s.Post("/api/v1/gold", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto j = body_json(req);
           svc.add_gold(bearer(req),
                        make_pair_key(j.at("pair").at(0).get<std::string>(), j.at("pair").at(1).get<std::string>()),
                        label_from_string(j.at("truth").get<std::string>()));
           send_json(res, {{"ok", true}}, 201);
         }));

  s.Get("/api/v1/tasks", guarded([&](const httplib::Request& req, httplib::Response& res) {
          if (req.has_param("annotator")) {
            send_json(res, tasks_json(svc.get_tasks(bearer(req), req.get_param_value("annotator"),
                                                    size_param(req, "max", 1))));
          } else {
            send_json(res, tasks_json(svc.list_tasks()));
          }
        }));

  s.Get(R"(/api/v1/tasks/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          send_json(res, to_json(svc.get_task(req.matches[1]), false));
        }));

  s.Post(R"(/api/v1/tasks/([^/]+)/response)", guarded([&](const httplib::Request& req, httplib::Response& res) {
           const auto j = body_json(req);
           const auto r = svc.respond(bearer(req), req.matches[1], j.at("annotator").get<std::string>(),
                                      label_from_string(j.at("label").get<std::string>()));
           nlohmann::json body = {{"accepted", r.accepted}, {"duplicate", r.duplicate},
                                  {"consensus", r.consensus ? nlohmann::json(to_string(*r.consensus)) : nlohmann::json()}};
           send_json(res, body);
         }));

  s.Get("/api/v1/annotators", guarded([&](const httplib::Request&, httplib::Response& res) {
          nlohmann::json a = nlohmann::json::array();
          for (const auto& p : svc.annotators()) a.push_back(to_json(p));
          send_json(res, a);
        }));

  s.Get("/api/v1/cohorts", guarded([&](const httplib::Request&, httplib::Response& res) {
          send_json(res, to_json(svc.get_cohorts()));
        }));

  s.Post("/api/v1/cohorts", guarded([&](const httplib::Request& req, httplib::Response& res) {
           svc.put_cohorts(bearer(req), partition_from_json(body_json(req)));
           send_json(res, {{"ok", true}});
         }));

  s.Get(R"(/api/v1/weights/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          const auto w = svc.get_weights(req.matches[1]);
          if (!w) throw not_found("no weights stored for workflow " + std::string(req.matches[1]));
          send_json(res, to_json(*w));
        }));

  s.Post(R"(/api/v1/weights/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
           svc.put_weights(bearer(req), req.matches[1], weights_from_json(body_json(req)));
           send_json(res, {{"ok", true}});
         }));

  s.Get(R"(/api/v1/docs/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
          const auto d = svc.get_doc(req.matches[1]);
          if (!d) throw not_found("no document " + std::string(req.matches[1]));
          send_json(res, *d);
        }));

  s.Post(R"(/api/v1/docs/([^/]+))", guarded([&](const httplib::Request& req, httplib::Response& res) {
           svc.put_doc(bearer(req), req.matches[1], body_json(req));
           send_json(res, {{"ok", true}});
         }));

  s.Get("/api/v1/metrics", guarded([&](const httplib::Request& req, httplib::Response& res) {
          if (req.get_param_value("format") == "csv") {
            res.set_content(svc.metrics_csv(), "text/csv");
          } else {
            send_json(res, svc.metrics());
          }
        }));
}

int DeiHttpServer::start(const std::string& host, int port) {
  port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (port_ < 0) throw Error(ErrorCode::unavailable, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void DeiHttpServer::listen(const std::string& host, int port) {
  port_ = port;
  if (!server_->listen(host, port)) throw Error(ErrorCode::unavailable, "cannot listen on " + host + ":" + std::to_string(port));
}

void DeiHttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace sloop::dei

#include "sloop/dei/nameservice.hpp"

#include <httplib.h>

#include <algorithm>

#include "sloop/dei/http_server.hpp"
#include "sloop/dei/service.hpp"
#include "sloop/error.hpp"
#include "sloop/log.hpp"

namespace sloop::dei {

nlohmann::json to_json(const DeiDescriptor& d) {
  return {{"name", d.name}, {"address", d.address}, {"workflows", d.workflows}, {"last_seen_ms", d.last_seen_ms}};
}

DeiDescriptor descriptor_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw validation_error("descriptor must be an object");
  for (const char* key : {"name", "address"}) {
    if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
      throw validation_error(std::string("descriptor missing ") + key);
    }
  }
  if (!j.contains("workflows") || !j.at("workflows").is_array() || j.at("workflows").empty()) {
    throw validation_error("descriptor missing workflow list");
  }
  DeiDescriptor d;
  d.name = j.at("name").get<std::string>();
  d.address = j.at("address").get<std::string>();
  for (const auto& w : j.at("workflows")) {
    if (!w.is_string()) throw validation_error("workflow names must be strings");
    d.workflows.push_back(w.get<std::string>());
  }
  d.last_seen_ms = j.value("last_seen_ms", std::int64_t{0});
  return d;
}

bool NameRegistry::register_dei(const DeiDescriptor& d, std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(d.name);
  const bool changed = it == entries_.end() || !(it->second == d);
  auto& e = entries_[d.name];
  e = d;
  e.last_seen_ms = now_ms;
  return changed;
}

void NameRegistry::heartbeat(const std::string& name, std::int64_t now_ms) {
  std::lock_guard lock(mu_);
  auto it = entries_.find(name);
  if (it == entries_.end()) throw not_found("no DEI registered as " + name);
  it->second.last_seen_ms = now_ms;
}

std::vector<DeiDescriptor> NameRegistry::list() const {
  std::lock_guard lock(mu_);
  std::vector<DeiDescriptor> out;
  for (const auto& [_, d] : entries_) out.push_back(d);
  return out;
}

namespace {

void reply(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
auto guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply(res, {{"error", to_string(e.code())}, {"message", e.what()}}, http_status(e.code()));
    } catch (const std::exception& e) {
      reply(res, {{"error", "validation"}, {"message", e.what()}}, 400);
    }
  };
}

}  // namespace

NameServiceServer::NameServiceServer() : server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  s.Post("/api/v1/register", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto d = descriptor_from_json(nlohmann::json::parse(req.body));
           const bool changed = registry_.register_dei(d, system_clock_ms());
           reply(res, {{"ack", true}, {"changed", changed}});
         }));
  s.Post(R"(/api/v1/heartbeat/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
           registry_.heartbeat(req.matches[1], system_clock_ms());
           reply(res, {{"ack", true}});
         }));
  s.Get("/api/v1/services", guarded([this](const httplib::Request&, httplib::Response& res) {
          nlohmann::json a = nlohmann::json::array();
          for (const auto& d : registry_.list()) a.push_back(to_json(d));
          reply(res, a);
        }));
}

NameServiceServer::~NameServiceServer() { stop(); }

int NameServiceServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::unavailable, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void NameServiceServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    throw Error(ErrorCode::unavailable, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void NameServiceServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::chrono::milliseconds backoff_delay(const BackoffPolicy& p, int n) {
  double ms = static_cast<double>(p.initial.count());
  for (int i = 1; i < n; ++i) ms *= p.factor;
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::min(ms, static_cast<double>(p.max_delay.count()))));
}

NameServiceClient::NameServiceClient(std::string base_url, BackoffPolicy policy, Sleeper sleeper)
    : base_(std::move(base_url)), policy_(policy), sleep_(std::move(sleeper)) {
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

namespace {

httplib::Client make_client(const std::string& base) {
  httplib::Client c(base);
  c.set_connection_timeout(2);
  c.set_read_timeout(5);
  return c;
}

void raise_for(const httplib::Result& res, const std::string& what) {
  if (!res) throw Error(ErrorCode::unavailable, what + ": " + httplib::to_string(res.error()));
  if (res->status >= 200 && res->status < 300) return;
  std::string message = res->body;
  try {
    message = nlohmann::json::parse(res->body).value("message", res->body);
  } catch (const nlohmann::json::exception&) {
  }
  const auto code = res->status == 400   ? ErrorCode::validation
                    : res->status == 404 ? ErrorCode::not_found
                    : res->status >= 500 ? ErrorCode::unavailable
                                         : ErrorCode::internal;
  throw Error(code, message);
}

}  // namespace

RegistrationResult NameServiceClient::register_dei(const DeiDescriptor& d) {
  const auto body = to_json(d);
  descriptor_from_json(body);
  RegistrationResult result;
  for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
    result.attempts = attempt;
    try {
      auto client = make_client(base_);
      raise_for(client.Post("/api/v1/register", body.dump(), "application/json"), "register");
      result.status = RegistrationStatus::registered;
      result.last_error.clear();
      return result;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::unavailable) throw;
      result.last_error = e.what();
      log_warn("name service unreachable (attempt " + std::to_string(attempt) + "): " + e.what());
      if (attempt < policy_.max_attempts) sleep_(backoff_delay(policy_, attempt));
    }
  }
  result.status = RegistrationStatus::degraded;
  return result;
}

void NameServiceClient::heartbeat(const std::string& name) {
  auto client = make_client(base_);
  raise_for(client.Post("/api/v1/heartbeat/" + name, "", "application/json"), "heartbeat");
}

std::vector<DeiDescriptor> NameServiceClient::list() {
  auto client = make_client(base_);
  auto res = client.Get("/api/v1/services");
  raise_for(res, "list");
  std::vector<DeiDescriptor> out;
  for (const auto& j : nlohmann::json::parse(res->body)) out.push_back(descriptor_from_json(j));
  return out;
}

}  // namespace sloop::dei

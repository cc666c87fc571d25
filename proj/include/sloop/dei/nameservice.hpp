#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace httplib {
class Server;
}

namespace sloop::dei {

struct DeiDescriptor {
  std::string name;
  std::string address;
  std::vector<std::string> workflows;
  std::int64_t last_seen_ms = 0;

  bool operator==(const DeiDescriptor& o) const {
    return name == o.name && address == o.address && workflows == o.workflows;
  }
};

nlohmann::json to_json(const DeiDescriptor& d);
// Throws validation error when name, address or the workflow list is missing.
DeiDescriptor descriptor_from_json(const nlohmann::json& j);

// In-memory registry keyed by DEI name.
class NameRegistry {
 public:
  // Returns true when the listing changed.
  bool register_dei(const DeiDescriptor& d, std::int64_t now_ms);
  void heartbeat(const std::string& name, std::int64_t now_ms);
  std::vector<DeiDescriptor> list() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, DeiDescriptor> entries_;
};

class NameServiceServer {
 public:
  NameServiceServer();
  ~NameServiceServer();
  int start(const std::string& host, int port);
  void listen(const std::string& host, int port);
  void stop();
  NameRegistry& registry() { return registry_; }

 private:
  NameRegistry registry_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

enum class RegistrationStatus { registered, degraded };

struct RegistrationResult {
  RegistrationStatus status = RegistrationStatus::degraded;
  int attempts = 0;
  std::string last_error;
};

struct BackoffPolicy {
  int max_attempts = 6;
  std::chrono::milliseconds initial{100};
  double factor = 2.0;
  std::chrono::milliseconds max_delay{5000};
};

// Delay before attempt n (n >= 1 is the first retry).
std::chrono::milliseconds backoff_delay(const BackoffPolicy& p, int n);

class NameServiceClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;
  explicit NameServiceClient(std::string base_url, BackoffPolicy policy = {}, Sleeper sleeper = {});

  // Retries unreachable errors with exponential backoff; validation errors are thrown.
  RegistrationResult register_dei(const DeiDescriptor& d);
  void heartbeat(const std::string& name);
  std::vector<DeiDescriptor> list();

 private:
  std::string base_;
  BackoffPolicy policy_;
  Sleeper sleep_;
};

}  // namespace sloop::dei

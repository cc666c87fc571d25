#pragma once

#include <memory>
#include <string>
#include <thread>

#include "sloop/dei/service.hpp"
#include "sloop/error.hpp"

namespace httplib {
class Server;
}

namespace sloop::dei {

int http_status(ErrorCode code);

// REST front end under /api/v1.
class DeiHttpServer {
 public:
  explicit DeiHttpServer(DeiService& service);
  ~DeiHttpServer();

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  // Blocks until stop().
  void listen(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void routes();

  DeiService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace sloop::dei

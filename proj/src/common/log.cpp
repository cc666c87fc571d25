#include "sloop/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include "sloop/error.hpp"

namespace sloop {

namespace {

LogLevel initial_level() {
  if (const char* env = std::getenv("SLOOP_LOG_LEVEL")) {
    try {
      return log_level_from_string(env);
    } catch (const Error&) {
    }
  }
  return LogLevel::warn;
}

std::atomic<LogLevel>& level_ref() {
  static std::atomic<LogLevel> level{initial_level()};
  return level;
}

const char* tag(LogLevel l) {
  switch (l) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warning";
    case LogLevel::error: return "error";
    case LogLevel::off: break;
  }
  return "";
}

}  // namespace

void set_log_level(LogLevel level) { level_ref().store(level); }

LogLevel log_level() { return level_ref().load(); }

LogLevel log_level_from_string(const std::string& name) {
  if (name == "debug") return LogLevel::debug;
  if (name == "info") return LogLevel::info;
  if (name == "warn" || name == "warning") return LogLevel::warn;
  if (name == "error") return LogLevel::error;
  if (name == "off") return LogLevel::off;
  throw validation_error("unknown log level '" + name + "'");
}

void log(LogLevel level, const std::string& message) {
  if (level < log_level() || level == LogLevel::off) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << tag(level) << ": " << message << '\n';
}

}  // namespace sloop

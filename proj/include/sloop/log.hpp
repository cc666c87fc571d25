#pragma once

#include <string>

namespace sloop {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Process-wide threshold; SLOOP_LOG_LEVEL (debug|info|warn|error|off) sets
// the initial value.
void set_log_level(LogLevel level);
LogLevel log_level();
LogLevel log_level_from_string(const std::string& name);

// Thread-safe, one line to stderr.
void log(LogLevel level, const std::string& message);

inline void log_debug(const std::string& m) { log(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_error(const std::string& m) { log(LogLevel::error, m); }

}  // namespace sloop

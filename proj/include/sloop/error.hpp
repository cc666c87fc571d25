#pragma once

#include <stdexcept>
#include <string>

namespace sloop {

enum class ErrorCode {
  validation,
  not_found,
  conflict,
  authentication,
  authorization,
  unavailable,
  io,
  internal,
};

const char* to_string(ErrorCode code);

// Single exception type; the code maps onto HTTP status in the DEI server.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Error validation_error(const std::string& what) { return {ErrorCode::validation, what}; }
inline Error not_found(const std::string& what) { return {ErrorCode::not_found, what}; }
inline Error conflict(const std::string& what) { return {ErrorCode::conflict, what}; }

}  // namespace sloop

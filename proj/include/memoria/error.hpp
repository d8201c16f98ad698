#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace memoria {

enum class ErrorCode {
  reject_invalid,
  key_not_found,
  capacity_exceeded,
  malformed,
  backend_unavailable,
  fixture_mismatch,
  save_failed,
  corrupt_state,
  unsupported_version,
  reward_unavailable,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the engine. `location` is set by parsers
// (e.g. "line 3") and by persistence (the offending file name).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string location = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message +
                           (location.empty() ? "" : " (at " + location + ")")),
        code_(code),
        detail_(message),
        location_(std::move(location)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  const std::string& location() const noexcept { return location_; }

 private:
  ErrorCode code_;
  std::string detail_;
  std::string location_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::string location = {}) {
  throw Error(code, message, std::move(location));
}

}  // namespace memoria

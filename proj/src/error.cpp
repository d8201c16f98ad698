#include "memoria/error.hpp"

namespace memoria {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::reject_invalid: return "reject-invalid";
    case ErrorCode::key_not_found: return "key-not-found";
    case ErrorCode::capacity_exceeded: return "capacity-exceeded";
    case ErrorCode::malformed: return "malformed";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::fixture_mismatch: return "fixture-mismatch";
    case ErrorCode::save_failed: return "save-failed";
    case ErrorCode::corrupt_state: return "corrupt-state";
    case ErrorCode::unsupported_version: return "unsupported-version";
    case ErrorCode::reward_unavailable: return "reward-unavailable";
  }
  return "unknown";
}

}  // namespace memoria

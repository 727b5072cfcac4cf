#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lvlingam {

enum class ErrorCode {
  invalid_input,
  cycle_detected,
  generation_exhausted,
  empty_result,
  degenerate_ensemble,
  budget_exceeded,
  numerical,
  internal,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid-input";
    case ErrorCode::cycle_detected: return "cycle-detected";
    case ErrorCode::generation_exhausted: return "generation-exhausted";
    case ErrorCode::empty_result: return "empty-result";
    case ErrorCode::degenerate_ensemble: return "degenerate-ensemble";
    case ErrorCode::budget_exceeded: return "budget-exceeded";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace lvlingam

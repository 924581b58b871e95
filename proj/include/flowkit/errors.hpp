#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowkit {

enum class ErrorCode {
  integration_diverged,
  step_underflow,
  odd_dimension,
  empty_cloud,
  grid_mismatch,
  not_converged,
  speed_vanishes,
  budget_exceeded,
  empty_intersection,
  immanence_unbounded,
  invalid_argument,
  config_error,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::integration_diverged: return "IntegrationDiverged";
    case ErrorCode::step_underflow: return "StepUnderflow";
    case ErrorCode::odd_dimension: return "OddDimension";
    case ErrorCode::empty_cloud: return "EmptyCloud";
    case ErrorCode::grid_mismatch: return "GridMismatch";
    case ErrorCode::not_converged: return "NotConverged";
    case ErrorCode::speed_vanishes: return "SpeedVanishes";
    case ErrorCode::budget_exceeded: return "BudgetExceeded";
    case ErrorCode::empty_intersection: return "EmptyIntersection";
    case ErrorCode::immanence_unbounded: return "ImmanenceUnbounded";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::config_error: return "ConfigError";
  }
  return "Unknown";
}

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Configuration problems map to exit code 2, everything else is numerical.
  bool is_config_error() const noexcept {
    return code_ == ErrorCode::config_error || code_ == ErrorCode::invalid_argument;
  }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace flowkit

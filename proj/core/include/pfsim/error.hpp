#pragma once

#include <stdexcept>
#include <string>

namespace pfsim {

enum class ErrorCode {
  InvalidArgument,
  ConfigError,
  NoInterface,
  SolverDiverged,
  NotConverged,
  SingularSystem,
  NonPositiveDistance,
  StepFailed,
  IoError,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; the code tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pfsim

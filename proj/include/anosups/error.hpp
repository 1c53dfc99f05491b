#pragma once

#include <stdexcept>
#include <string>

namespace anosups {

enum class ErrorCode {
  kInvalidArgument,
  kNonDivisibleDimensions,
  kInvalidK,
  kIndexOutOfRange,
  kGeometryMismatch,
  kShapeMismatch,
  kTargetNotMasked,
  kDivergedTraining,
  kEmptySample,
  kAllPatchesSuspected,
  kOutOfBounds,
  kIo,
  kFormat,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace anosups

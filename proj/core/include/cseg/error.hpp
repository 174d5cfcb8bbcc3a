#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cseg {

enum class ErrorCode {
  IoError,
  UnsupportedFormat,
  CorruptFile,
  ShapeMismatch,
  NotNormalized,
  DimensionMismatch,
  DepthMismatch,
  ClassWithoutScribble,
  ConflictingScribbles,
  OutOfBounds,
  NoError,  // correction simulator: prediction already perfect
  UnseededRegion,
  NonConvergence,
  Infeasible,
  TooLarge,
  MissingRoot,
  InvalidArgument,
  PolicyViolation,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cseg

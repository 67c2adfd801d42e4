#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spn {

enum class ErrorCode {
  InvalidArgument,
  InvalidCamera,
  InvalidModel,
  NonPositiveScale,
  NegativeThreshold,
  NoDominantAngle,
  ZeroDisplacement,
  DegenerateGeometry,
  InvalidAngles,
  TooFewCameras,
  EmptyModel,
  MalformedFile,
  IoError,
  InvalidConfig,
  InvalidFraction,
  ShapeMismatch,
  NonPositiveDelta,
  EmptyMask,
  EmptyDataset,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

// All domain failures surface as spn::Error; the code is what tests and the CLI dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spn

#include "spn/error.hpp"

namespace spn {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidCamera: return "InvalidCamera";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::NonPositiveScale: return "NonPositiveScale";
    case ErrorCode::NegativeThreshold: return "NegativeThreshold";
    case ErrorCode::NoDominantAngle: return "NoDominantAngle";
    case ErrorCode::ZeroDisplacement: return "ZeroDisplacement";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::InvalidAngles: return "InvalidAngles";
    case ErrorCode::TooFewCameras: return "TooFewCameras";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonPositiveDelta: return "NonPositiveDelta";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace spn

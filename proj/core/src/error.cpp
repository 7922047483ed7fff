#include "expomatch/error.hpp"

namespace expomatch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::WeightSumViolation: return "WeightSumViolation";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::InsufficientUnits: return "InsufficientUnits";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::DegenerateQuantiles: return "DegenerateQuantiles";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MixedRegions: return "MixedRegions";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::AllZeroCounts: return "AllZeroCounts";
    case ErrorCode::ZeroPooledSd: return "ZeroPooledSd";
  }
  return "Unknown";
}

ErrorCategory category(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
      return ErrorCategory::Config;
    case ErrorCode::Separation:
    case ErrorCode::Singular:
    case ErrorCode::NoConvergence:
    case ErrorCode::AllZeroCounts:
    case ErrorCode::ZeroPooledSd:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace expomatch

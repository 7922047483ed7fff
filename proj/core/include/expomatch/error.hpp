#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace expomatch {

enum class ErrorCode {
  // configuration
  InvalidConfig,
  // data
  MissingColumn,
  EmptyDataset,
  DuplicateKey,
  WeightSumViolation,
  EmptyReference,
  InsufficientUnits,
  EmptyOverlap,
  DegenerateQuantiles,
  ColumnMismatch,
  IoFailure,
  MixedRegions,
  DegenerateGeometry,
  // numerical
  Separation,
  Singular,
  NoConvergence,
  AllZeroCounts,
  ZeroPooledSd,
};

enum class ErrorCategory { Config, Data, Numerical };

std::string_view to_string(ErrorCode code);
ErrorCategory category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return expomatch::category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace expomatch

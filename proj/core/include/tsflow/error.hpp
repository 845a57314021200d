#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsflow {

enum class ErrorCode {
  MissingFile,
  MalformedRow,
  NonNumericCell,
  NaNDetected,
  InvalidFrame,
  FrameTooShort,
  SchemaViolation,
  DanglingReference,
  DuplicateId,
  UnknownId,
  EmptyBank,
  NoCandidates,
  ShapeMismatch,
  EmptyInput,
  MapeDenominatorZero,
  NonPositivePrice,
  TooShort,
  ZeroVolatility,
  EmptySet,
  DimensionMismatch,
  DegenerateFeature,
  LagOutOfRange,
  InvalidArgument,
  BudgetImpossible,
  ParseExhausted,
  BackendUnavailable,
  NoJsonFound,
  FieldViolation,
  LogClosed,
  IoFailure,
  ChainInvalid,
  TransportExhausted,
  ReplayMiss,
  AuthMissing,
  AllCandidatesFailed,
  ConfigError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure that crosses a module boundary is an Error carrying a code,
/// so callers (the CLI in particular) can map failures without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tsflow

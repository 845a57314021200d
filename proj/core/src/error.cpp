#include "tsflow/error.hpp"

namespace tsflow {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::NaNDetected: return "NaNDetected";
    case ErrorCode::InvalidFrame: return "InvalidFrame";
    case ErrorCode::FrameTooShort: return "FrameTooShort";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MapeDenominatorZero: return "MapeDenominatorZero";
    case ErrorCode::NonPositivePrice: return "NonPositivePrice";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ZeroVolatility: return "ZeroVolatility";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateFeature: return "DegenerateFeature";
    case ErrorCode::LagOutOfRange: return "LagOutOfRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BudgetImpossible: return "BudgetImpossible";
    case ErrorCode::ParseExhausted: return "ParseExhausted";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::NoJsonFound: return "NoJsonFound";
    case ErrorCode::FieldViolation: return "FieldViolation";
    case ErrorCode::LogClosed: return "LogClosed";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::ChainInvalid: return "ChainInvalid";
    case ErrorCode::TransportExhausted: return "TransportExhausted";
    case ErrorCode::ReplayMiss: return "ReplayMiss";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace tsflow

#include "mscate/error.hpp"

namespace mscate {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::UnparsableRow: return "UnparsableRow";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::UnknownUnitId: return "UnknownUnitId";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::NoValidCenter: return "NoValidCenter";
    case ErrorCode::MaskTooLarge: return "MaskTooLarge";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::ScaleTagMismatch: return "ScaleTagMismatch";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::SingleArm: return "SingleArm";
    case ErrorCode::TooFewUnits: return "TooFewUnits";
    case ErrorCode::BlocksDontCover: return "BlocksDontCover";
    case ErrorCode::UnknownFlagCombination: return "UnknownFlagCombination";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::RequiresRawRepresentations: return "RequiresRawRepresentations";
    case ErrorCode::Numerical: return "Numerical";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::Config:
      return ErrorCategory::Usage;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::Numerical:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace mscate

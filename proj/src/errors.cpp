#include "caol/errors.hpp"

namespace caol {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidOffset: return "InvalidOffset";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DeltaOutOfRange: return "DeltaOutOfRange";
    case ErrorCode::RankHypothesisUnsatisfiable: return "RankHypothesisUnsatisfiable";
    case ErrorCode::MissingSnapshots: return "MissingSnapshots";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::DimensionOverflow: return "DimensionOverflow";
    case ErrorCode::UnknownStep: return "UnknownStep";
    case ErrorCode::PatchTooLarge: return "PatchTooLarge";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace caol

#include "extctl/error.hpp"

namespace extctl {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MISSING_COLUMN";
    case ErrorCode::ParseError: return "PARSE_ERROR";
    case ErrorCode::InvariantViolation: return "INVARIANT_VIOLATION";
    case ErrorCode::EmptyCell: return "EMPTY_CELL";
    case ErrorCode::OverlapNoExternal: return "OVERLAP_NO_EXTERNAL";
    case ErrorCode::IoError: return "IO_ERROR";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::NoVarianceModel: return "NO_VARIANCE_MODEL";
    case ErrorCode::NonConvergence: return "NON_CONVERGENCE";
    case ErrorCode::RankDeficient: return "RANK_DEFICIENT";
    case ErrorCode::SeparationDetected: return "SEPARATION_DETECTED";
    case ErrorCode::DegenerateVariance: return "DEGENERATE_VARIANCE";
    case ErrorCode::MismatchedPoint: return "MISMATCHED_POINT";
    case ErrorCode::ReplicateFailure: return "REPLICATE_FAILURE";
  }
  return "UNKNOWN";
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::NoVarianceModel:
      return 2;
    case ErrorCode::MissingColumn:
    case ErrorCode::ParseError:
    case ErrorCode::InvariantViolation:
    case ErrorCode::EmptyCell:
    case ErrorCode::OverlapNoExternal:
    case ErrorCode::IoError:
      return 3;
    case ErrorCode::NonConvergence:
    case ErrorCode::RankDeficient:
    case ErrorCode::SeparationDetected:
    case ErrorCode::DegenerateVariance:
    case ErrorCode::MismatchedPoint:
    case ErrorCode::ReplicateFailure:
      return 4;
  }
  return 4;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

}  // namespace extctl

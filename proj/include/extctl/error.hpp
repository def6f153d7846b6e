#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace extctl {

enum class ErrorCode {
  MissingColumn,
  ParseError,
  InvariantViolation,
  EmptyCell,
  OverlapNoExternal,
  IoError,
  ConfigError,
  NoVarianceModel,
  NonConvergence,
  RankDeficient,
  SeparationDetected,
  DegenerateVariance,
  MismatchedPoint,
  ReplicateFailure,
};

// Stable machine-readable name, e.g. "EMPTY_CELL".
std::string_view error_code_name(ErrorCode code);

// CLI exit code: 2 config, 3 data, 4 numeric.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

  // Optional location / payload, filled by the throwing site when known.
  std::optional<std::size_t> row;
  std::optional<std::string> column;
  std::vector<std::string> columns;  // collinear columns (RankDeficient)
  std::vector<double> trace;         // score norms per iteration (NonConvergence)

 private:
  ErrorCode code_;
};

}  // namespace extctl

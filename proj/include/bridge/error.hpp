#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bridge {

enum class ErrorKind {
  // input and configuration
  MissingColumn,
  NonNumericValue,
  ArmTrialMismatch,
  NonPositiveTime,
  InvalidValue,
  UnknownCovariate,
  EmptyTrialAfterRestriction,
  InvalidConfig,
  // model fitting
  Separation,
  RankDeficient,
  AllSameClass,
  NonConvergence,
  MonotoneLikelihood,
  SchemaMismatch,
  UnknownStratum,
  // estimation and resampling
  ZeroEffectiveSampleSize,
  NonFiniteWeight,
  DegeneratePermutation,
  MissingBands,
  TooManyFailedReplicates,
  InsufficientPool,
  ScenarioAborted,
};

std::string_view to_string(ErrorKind kind) noexcept;

// True for errors caused by the user's data or configuration (CLI exit code 2).
bool is_input_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> row = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  // 1-based data row (header excluded) for CSV ingestion errors.
  std::optional<std::size_t> row() const noexcept { return row_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> row_;
};

}  // namespace bridge

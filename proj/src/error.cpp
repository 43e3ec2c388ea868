#include "bridge/error.hpp"

namespace bridge {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonNumericValue: return "NonNumericValue";
    case ErrorKind::ArmTrialMismatch: return "ArmTrialMismatch";
    case ErrorKind::NonPositiveTime: return "NonPositiveTime";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::UnknownCovariate: return "UnknownCovariate";
    case ErrorKind::EmptyTrialAfterRestriction: return "EmptyTrialAfterRestriction";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::AllSameClass: return "AllSameClass";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::MonotoneLikelihood: return "MonotoneLikelihood";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::UnknownStratum: return "UnknownStratum";
    case ErrorKind::ZeroEffectiveSampleSize: return "ZeroEffectiveSampleSize";
    case ErrorKind::NonFiniteWeight: return "NonFiniteWeight";
    case ErrorKind::DegeneratePermutation: return "DegeneratePermutation";
    case ErrorKind::MissingBands: return "MissingBands";
    case ErrorKind::TooManyFailedReplicates: return "TooManyFailedReplicates";
    case ErrorKind::InsufficientPool: return "InsufficientPool";
    case ErrorKind::ScenarioAborted: return "ScenarioAborted";
  }
  return "Unknown";
}

bool is_input_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingColumn:
    case ErrorKind::NonNumericValue:
    case ErrorKind::ArmTrialMismatch:
    case ErrorKind::NonPositiveTime:
    case ErrorKind::InvalidValue:
    case ErrorKind::UnknownCovariate:
    case ErrorKind::EmptyTrialAfterRestriction:
    case ErrorKind::InvalidConfig:
    case ErrorKind::SchemaMismatch:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& message, std::optional<std::size_t> row)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), row_(row) {}

}  // namespace bridge

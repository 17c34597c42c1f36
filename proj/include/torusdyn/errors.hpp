#pragma once

#include <stdexcept>
#include <string>

namespace torusdyn {

enum class ErrorCode {
  InvalidArgument,
  BranchCollision,
  NewtonDivergence,
  ConstraintViolation,
  BudgetExceeded,
  Inconclusive,
  OrbitEntersU0,
  AxiomViolation,
  NotASource,
  DeltaNotFound,
  BranchUndefined,
  ContractionFailed,
  RadiusTooLarge,
  NoCellsFound,
  MarkovViolation,
  EmptyPartition,
  BadParam,
  UnknownCell,
  SignalBelowNoise,
  ConfigValidation,
  StageDependency,
};

const char* to_string(ErrorCode code);

// Single exception type for the library; `code()` identifies the failure and
// `detail()` carries an optional integer payload (e.g. the largest feasible
// depth for BudgetExceeded, or a cell id for MarkovViolation).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, long long detail = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  long long detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  long long detail_;
};

}  // namespace torusdyn

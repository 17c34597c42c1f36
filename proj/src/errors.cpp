#include "torusdyn/errors.hpp"

namespace torusdyn {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BranchCollision: return "BranchCollision";
    case ErrorCode::NewtonDivergence: return "NewtonDivergence";
    case ErrorCode::ConstraintViolation: return "ConstraintViolation";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::Inconclusive: return "Inconclusive";
    case ErrorCode::OrbitEntersU0: return "OrbitEntersU0";
    case ErrorCode::AxiomViolation: return "AxiomViolation";
    case ErrorCode::NotASource: return "NotASource";
    case ErrorCode::DeltaNotFound: return "DeltaNotFound";
    case ErrorCode::BranchUndefined: return "BranchUndefined";
    case ErrorCode::ContractionFailed: return "ContractionFailed";
    case ErrorCode::RadiusTooLarge: return "RadiusTooLarge";
    case ErrorCode::NoCellsFound: return "NoCellsFound";
    case ErrorCode::MarkovViolation: return "MarkovViolation";
    case ErrorCode::EmptyPartition: return "EmptyPartition";
    case ErrorCode::BadParam: return "BadParam";
    case ErrorCode::UnknownCell: return "UnknownCell";
    case ErrorCode::SignalBelowNoise: return "SignalBelowNoise";
    case ErrorCode::ConfigValidation: return "ConfigValidation";
    case ErrorCode::StageDependency: return "StageDependency";
  }
  return "Unknown";
}

}  // namespace torusdyn

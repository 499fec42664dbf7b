#include "degenflow/error.hpp"

namespace degenflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::OverlappingTubes: return "OverlappingTubes";
    case ErrorCode::NonPositiveCoefficient: return "NonPositiveCoefficient";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::LevelOutOfChart: return "LevelOutOfChart";
    case ErrorCode::EigensolveFailure: return "EigensolveFailure";
    case ErrorCode::NonPositiveEigenfunction: return "NonPositiveEigenfunction";
    case ErrorCode::DegenerateClassification: return "DegenerateClassification";
    case ErrorCode::BracketFailure: return "BracketFailure";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::StepBlowup: return "StepBlowup";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::SingularTransientBlock: return "SingularTransientBlock";
    case ErrorCode::NotAllRepelling: return "NotAllRepelling";
    case ErrorCode::MissingIngredient: return "MissingIngredient";
    case ErrorCode::BinMismatch: return "BinMismatch";
    case ErrorCode::TruncationTooSmall: return "TruncationTooSmall";
    case ErrorCode::NonErgodicTypeChain: return "NonErgodicTypeChain";
    case ErrorCode::PoissonSolveFailure: return "PoissonSolveFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace degenflow

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace degenflow {

enum class ErrorCode {
  OverlappingTubes,
  NonPositiveCoefficient,
  OutsideDomain,
  LevelOutOfChart,
  EigensolveFailure,
  NonPositiveEigenfunction,
  DegenerateClassification,
  BracketFailure,
  SingularSystem,
  StepBlowup,
  BudgetExhausted,
  InsufficientPoints,
  SingularTransientBlock,
  NotAllRepelling,
  MissingIngredient,
  BinMismatch,
  TruncationTooSmall,
  NonErgodicTypeChain,
  PoissonSolveFailure,
  ParseError,
  ValidationError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace degenflow

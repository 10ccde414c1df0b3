#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kahler {

/// Stable error identifiers. The string form is part of the CLI contract.
enum class ErrorCode {
  NotAComplexStructure,
  NotOrthogonal,
  OddDimension,
  InvalidArgument,
  BasePointMismatch,
  DimensionMismatch,
  CutLocus,
  ComponentMismatch,
  NotOrthogonalGroupElement,
  DegeneratePlane,
  ZeroProjection,
  DimensionTooSmall,
  DidNotConverge,
  ConvexityViolation,
  OutsideDomain,
  MetricNotInvertible,
  StepTooCoarse,
  LoopEscapesDomain,
  UnknownManifold,
  DeterminantAnomaly,
  GridTooCoarse,
  FormNotAntisymmetric,
  ParseError,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotAComplexStructure: return "NotAComplexStructure";
    case ErrorCode::NotOrthogonal: return "NotOrthogonal";
    case ErrorCode::OddDimension: return "OddDimension";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BasePointMismatch: return "BasePointMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::CutLocus: return "CutLocus";
    case ErrorCode::ComponentMismatch: return "ComponentMismatch";
    case ErrorCode::NotOrthogonalGroupElement: return "NotOrthogonalGroupElement";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::ZeroProjection: return "ZeroProjection";
    case ErrorCode::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorCode::DidNotConverge: return "DidNotConverge";
    case ErrorCode::ConvexityViolation: return "ConvexityViolation";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::MetricNotInvertible: return "MetricNotInvertible";
    case ErrorCode::StepTooCoarse: return "StepTooCoarse";
    case ErrorCode::LoopEscapesDomain: return "LoopEscapesDomain";
    case ErrorCode::UnknownManifold: return "UnknownManifold";
    case ErrorCode::DeterminantAnomaly: return "DeterminantAnomaly";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::FormNotAntisymmetric: return "FormNotAntisymmetric";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

}  // namespace kahler

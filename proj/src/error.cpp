#include "mvh/error.hpp"

namespace mvh {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::InvalidThreshold: return "InvalidThreshold";
    case ErrorKind::NotRealSpectrum: return "NotRealSpectrum";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonSquareGrid: return "NonSquareGrid";
    case ErrorKind::ConjugateSymmetryViolation: return "ConjugateSymmetryViolation";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NoSSMBlocks: return "NoSSMBlocks";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::InsufficientGenes: return "InsufficientGenes";
    case ErrorKind::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorKind::InsufficientGroups: return "InsufficientGroups";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
    case ErrorKind::InvalidInput: return "InvalidInput";
  }
  return "Unknown";
}

}  // namespace mvh

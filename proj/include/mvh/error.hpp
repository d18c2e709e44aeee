#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvh {

enum class ErrorKind {
  InvalidArgument,
  DomainError,
  InvalidThreshold,
  NotRealSpectrum,
  NonConvergence,
  LengthMismatch,
  ShapeMismatch,
  NonSquareGrid,
  ConjugateSymmetryViolation,
  NonFinite,
  NoSSMBlocks,
  SingularSystem,
  InsufficientGenes,
  InsufficientOverlap,
  InsufficientGroups,
  NumericalFailure,
  DivisionByZero,
  InvalidInput,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace mvh

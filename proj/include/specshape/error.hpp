#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace specshape {

enum class ErrorKind {
  NonFinite,
  NoConvergence,
  NotSymmetric,
  ShapeMismatch,
  RankDeficientNegativePower,
  ZeroMatrix,
  InvalidConfig,
  StepOutOfRange,
  SeedRequired,
  Diverged,
  NonPositiveInput,
  TooFewModes,
  KTooLarge,
  EpsilonTooSmall,
  TooFewBatches,
  CurvatureBelowFloor,
  DegenerateFit,
  LabelOutOfRange,
  InvalidParams,
  ParseError,
  ValidationError,
  MalformedMetrics,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure in the library surfaces as this exception. `kind()` is the
/// stable, testable part; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  /// ParseError carries the 1-based line of the offending input.
  Error(ErrorKind kind, std::size_t line, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorKind kind_;
  std::size_t line_ = 0;
};

}  // namespace specshape

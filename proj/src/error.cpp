#include "specshape/error.hpp"

namespace specshape {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::RankDeficientNegativePower: return "RankDeficientNegativePower";
    case ErrorKind::ZeroMatrix: return "ZeroMatrix";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::StepOutOfRange: return "StepOutOfRange";
    case ErrorKind::SeedRequired: return "SeedRequired";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::NonPositiveInput: return "NonPositiveInput";
    case ErrorKind::TooFewModes: return "TooFewModes";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::EpsilonTooSmall: return "EpsilonTooSmall";
    case ErrorKind::TooFewBatches: return "TooFewBatches";
    case ErrorKind::CurvatureBelowFloor: return "CurvatureBelowFloor";
    case ErrorKind::DegenerateFit: return "DegenerateFit";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::MalformedMetrics: return "MalformedMetrics";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

Error::Error(ErrorKind kind, std::size_t line, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + " (line " + std::to_string(line) + "): " + what),
      kind_(kind),
      line_(line) {}

}  // namespace specshape

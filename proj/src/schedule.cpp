#include "specshape/schedule.hpp"

#include <cmath>
#include <string>

#include "specshape/error.hpp"

namespace specshape {

std::string_view to_string(ScheduleShape s) noexcept {
  switch (s) {
    case ScheduleShape::Logistic: return "logistic";
    case ScheduleShape::AbruptSwitch: return "abrupt-switch";
    case ScheduleShape::FixedNegative: return "fixed-negative";
  }
  return "unknown";
}

ScheduleShape parse_schedule_shape(std::string_view name) {
  if (name == "logistic") return ScheduleShape::Logistic;
  if (name == "abrupt-switch" || name == "abrupt") return ScheduleShape::AbruptSwitch;
  if (name == "fixed-negative" || name == "fixed") return ScheduleShape::FixedNegative;
  throw Error(ErrorKind::InvalidConfig, "unknown schedule shape '" + std::string(name) + "'");
}

SpectralSchedule SpectralSchedule::ablation_optimum(std::size_t total_steps) {
  SpectralSchedule s;
  s.tau = 0.04;
  s.w = 0.04;
  s.total_steps = total_steps;
  return s;
}

void validate(const SpectralSchedule& s) {
  if (!(s.p_max > s.p_min)) throw Error(ErrorKind::InvalidConfig, "schedule: p_max must exceed p_min");
  if (!(s.tau > 0.0 && s.tau < 1.0)) throw Error(ErrorKind::InvalidConfig, "schedule: tau must lie in (0,1)");
  if (!(s.w > 0.0) || !std::isfinite(s.w)) throw Error(ErrorKind::InvalidConfig, "schedule: w must be positive");
  if (s.total_steps == 0) throw Error(ErrorKind::InvalidConfig, "schedule: total_steps must be positive");
}

double exponent_at(const SpectralSchedule& s, std::size_t t) {
  if (t > s.total_steps) {
    throw Error(ErrorKind::StepOutOfRange,
                "step " + std::to_string(t) + " beyond total " + std::to_string(s.total_steps));
  }
  const double frac = static_cast<double>(t) / static_cast<double>(s.total_steps);
  switch (s.shape) {
    case ScheduleShape::AbruptSwitch:
      return frac < s.tau ? s.p_max : s.p_min;
    case ScheduleShape::FixedNegative:
      return s.p_min;
    case ScheduleShape::Logistic:
      break;
  }
  const double u = (frac - s.tau) / s.w;
  // 1/(1+e^u), written so neither branch overflows.
  const double a = u > 0.0 ? std::exp(-u) / (1.0 + std::exp(-u)) : 1.0 / (1.0 + std::exp(u));
  return s.p_min + a * (s.p_max - s.p_min);
}

std::string_view to_string(ShaperKind k) noexcept {
  switch (k) {
    case ShaperKind::RawUpdate: return "raw";
    case ShaperKind::NewtonSchulz: return "newton-schulz";
    case ShaperKind::FastSpectral: return "fast-spectral";
  }
  return "unknown";
}

ShaperChoice anchor(double p) {
  if (p >= kRawUpdateThreshold) return {ShaperKind::RawUpdate, p};
  if (p >= 0.0) return {ShaperKind::NewtonSchulz, p};
  return {ShaperKind::FastSpectral, p};
}

ShaperChoice select_shaper(const SpectralSchedule& s, std::size_t t) { return anchor(exponent_at(s, t)); }

}  // namespace specshape

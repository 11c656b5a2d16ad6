#pragma once

#include <cstddef>
#include <string_view>

namespace specshape {

/// How the exponent moves from p_max to p_min over a run.
///  - Logistic: smooth decreasing sigmoid centred at tau*T with width w.
///  - AbruptSwitch: p_max before step tau*T, p_min from then on.
///  - FixedNegative: p_min for every step.
enum class ScheduleShape { Logistic, AbruptSwitch, FixedNegative };

std::string_view to_string(ScheduleShape s) noexcept;
ScheduleShape parse_schedule_shape(std::string_view name);

struct SpectralSchedule {
  double p_max = 1.0;
  double p_min = -0.25;
  double tau = 0.02;
  double w = 0.01;
  std::size_t total_steps = 1000;
  ScheduleShape shape = ScheduleShape::Logistic;

  /// tau = 0.04, w = 0.04: the best-performing point of the (tau, w) ablation.
  static SpectralSchedule ablation_optimum(std::size_t total_steps);
};

/// Throws InvalidConfig unless p_max > p_min, 0 < tau < 1, w > 0, T > 0.
void validate(const SpectralSchedule& s);

/// Exponent for 0-based step t in [0, T].
double exponent_at(const SpectralSchedule& s, std::size_t t);

enum class ShaperKind { RawUpdate, NewtonSchulz, FastSpectral };

std::string_view to_string(ShaperKind k) noexcept;

struct ShaperChoice {
  ShaperKind kind;
  double exponent;
};

/// Anchoring threshold: p >= 1/4 keeps the raw update.
inline constexpr double kRawUpdateThreshold = 0.25;

/// Maps an exponent to its anchored operator.
ShaperChoice anchor(double p);

ShaperChoice select_shaper(const SpectralSchedule& s, std::size_t t);

}  // namespace specshape

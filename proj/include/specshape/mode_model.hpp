#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "specshape/rng.hpp"

namespace specshape {

/// Diagonal local model. Mode i has normalized curvature h_i in (0, 1] with
/// max h_i = 1, noise variance c_i and initial residual delta_{i,0}. The
/// curvature-aligned scale alpha_t is folded into eta.
struct ModeModelConfig {
  std::vector<double> curvatures;
  std::vector<double> noise_levels;
  std::vector<double> initial_residuals;
  double kappa = 1.0;
  double eta = 0.1;
  double exponent = 0.0;
  std::size_t steps = 100;
};

void validate(const ModeModelConfig& cfg);

/// Deterministic per-step multiplier 1 - eta*kappa*h^((p+1)/2).
double mode_multiplier(double h, double kappa, double eta, double p);

/// (1 - eta*kappa*h^((p+1)/2)) * delta - eta*h^((p-1)/2) * xi
double mode_step(double delta, double h, double kappa, double eta, double p, double xi);

/// (1 - eta*kappa*h^((p+1)/2))^2 * m2 + eta^2 * h^(p-1) * c
double second_moment_step(double m2, double h, double kappa, double eta, double p, double c);

enum class SimulationMode { ClosedForm, MonteCarlo };
enum class NoiseKind { Gaussian, Rademacher };
enum class TrajectoryStatus { Ok, Diverged };

std::string_view to_string(SimulationMode m) noexcept;
std::string_view to_string(NoiseKind k) noexcept;
SimulationMode parse_simulation_mode(std::string_view name);
NoiseKind parse_noise_kind(std::string_view name);

// A second moment (or squared residual) above this aborts the trajectory.
inline constexpr double kDivergenceThreshold = 1e12;

struct ModeTrajectory {
  SimulationMode mode = SimulationMode::ClosedForm;
  // values[t][i] for t = 0..steps: E[delta^2] for ClosedForm, delta for
  // MonteCarlo. A diverged run stops at the first offending step.
  std::vector<std::vector<double>> values;
  TrajectoryStatus status = TrajectoryStatus::Ok;
  std::optional<std::size_t> diverged_step;
  std::uint64_t config_hash = 0;
  std::optional<std::uint64_t> seed;

  /// Per-step squared residuals (values as-is for ClosedForm).
  std::vector<std::vector<double>> second_moments() const;
};

std::uint64_t config_hash(const ModeModelConfig& cfg);

/// Draws one zero-mean noise value with the given variance.
double draw_noise(Rng& rng, NoiseKind kind, double variance);

/// MonteCarlo needs a seed (SeedRequired otherwise) and uses replica 0 of
/// the seed's substreams.
ModeTrajectory simulate_trajectory(const ModeModelConfig& cfg, SimulationMode mode,
                                   std::optional<std::uint64_t> seed = std::nullopt,
                                   NoiseKind noise = NoiseKind::Gaussian);

/// Monte Carlo replica `replica` of the seed; replicas are independent.
ModeTrajectory simulate_replica(const ModeModelConfig& cfg, std::uint64_t seed, std::uint64_t replica,
                                NoiseKind noise = NoiseKind::Gaussian);

struct MomentEstimate {
  std::vector<std::vector<double>> mean;            // [t][i] of delta^2
  std::vector<std::vector<double>> standard_error;  // [t][i]
};

/// Mean and standard error of delta^2 over `replicas` Monte Carlo runs.
MomentEstimate monte_carlo_moments(const ModeModelConfig& cfg, std::uint64_t seed, std::size_t replicas,
                                   NoiseKind noise = NoiseKind::Gaussian);

enum class Sampling { Plain, Stratified };

/// Monte Carlo estimate of E[mode_step(delta, ...)^2] over `draws` Gaussian
/// xi with variance c. Stratified sampling puts one draw in each of `draws`
/// equal-probability strata of the normal distribution.
double one_step_second_moment_mc(double delta, double h, double kappa, double eta, double p, double c,
                                 std::size_t draws, Rng& rng, Sampling sampling = Sampling::Stratified);

struct ExponentSweep {
  std::vector<double> p_grid;
  std::vector<double> terminal_total;  // sum_i E[delta_{i,H}^2]; +inf when diverged
  std::size_t argmin = 0;
  double best_p = 0.0;
};

/// Closed-form sweep over p. Exact ties go to the largest p, which
/// amplifies noise least.
ExponentSweep optimal_exponent_sweep(const ModeModelConfig& cfg, std::span<const double> p_grid,
                                     std::size_t horizon);

struct SignalMetrics {
  double residual_shift = 0.0;         // Pi
  std::vector<double> noise_adjusted;  // u_i
  double flat_advantage = 0.0;         // Omega
  std::vector<std::size_t> strong_bucket;
  std::vector<std::size_t> flat_bucket;
};

inline constexpr std::size_t kDefaultBucketSize = 8;

/// Strong bucket: the bucket_size largest curvatures; flat bucket: the
/// bucket_size smallest (ties by index). Medians are lower medians.
SignalMetrics signal_metrics(std::span<const double> residual_energy, std::span<const double> noise,
                             std::span<const double> curvature, std::size_t bucket_size = kDefaultBucketSize);

/// Pi alone, for noiseless settings where u and Omega are undefined.
double residual_shift(std::span<const double> residual_energy, std::span<const double> curvature,
                      std::size_t bucket_size = kDefaultBucketSize);

/// Lower median: element floor((n-1)/2) of the sorted values.
double lower_median(std::vector<double> values);

}  // namespace specshape

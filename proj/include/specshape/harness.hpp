#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specshape/config.hpp"
#include "specshape/probes.hpp"

namespace specshape {

inline constexpr std::string_view kMetricsHeader = "step,train_loss,eval_loss,p_t,lr_t,shaper,wall_ms";
inline constexpr std::string_view kProbesHeader =
    "step,mode_rank,h_hat,c_hat,delta2_hat,g_probe,pi_t,omega_t,beta_t,r2,u_flat_median";
inline constexpr std::string_view kSweepHeader =
    "axis,value,status,best_eval_loss,final_eval_loss,steps_to_target,diverged_step";

// Loss above this (or non-finite) ends a run as diverged.
inline constexpr double kLossDivergence = 1e12;

struct MetricsRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  double eval_loss = 0.0;
  std::optional<double> p_t;  // absent for AdamW
  double lr_t = 0.0;
  std::string shaper;
  double wall_ms = 0.0;
};

enum class RunStatus { Ok, Diverged };

struct RunResult {
  RunStatus status = RunStatus::Ok;
  std::optional<std::size_t> diverged_step;
  std::string message;
  std::vector<MetricsRow> metrics;
  std::vector<ProbeReport> probes;
  ParamMap params;
};

struct TrainOptions {
  // Directory for config.resolved, metrics.csv, probes.csv and checkpoint/.
  // Nothing is written when empty.
  std::filesystem::path out;
  // Overrides probe.stride when set; 0 disables probing.
  std::optional<std::size_t> probe_stride;
};

/// Runs total_steps optimizer steps. Rows are logged at step 0, every
/// eval_stride steps and at total_steps. Divergence is reported in the
/// result, not thrown.
RunResult run_train(const RunConfig& cfg, const TrainOptions& options = {});

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows);
void write_probes_csv(std::ostream& os, std::span<const ProbeReport> reports);

/// Throws MalformedMetrics on a wrong header, bad field or non-increasing step.
std::vector<MetricsRow> read_metrics_csv(std::istream& is);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

/// First logged step with eval_loss <= target; nullopt when never reached.
std::optional<std::size_t> steps_to_target(std::span<const MetricsRow> rows, double target);
std::optional<std::size_t> steps_to_target(const std::filesystem::path& metrics, double target);

/// eval_loss at the last logged step at or before fraction * final step.
std::optional<double> eval_loss_at_fraction(std::span<const MetricsRow> rows, double fraction);

enum class SweepAxis { PMin, Lr, Tau, W, ScheduleShape };

std::string_view to_string(SweepAxis a) noexcept;
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
  std::string axis;
  std::string value;
  std::string status;  // ok | diverged | error
  std::optional<double> best_eval_loss;
  std::optional<double> final_eval_loss;
  std::optional<std::size_t> steps_to_target;
  std::optional<std::size_t> diverged_step;
  std::string message;
};

/// Applies one sweep value to a copy of the template.
RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value);

/// One independent run per value; a failing run becomes a status row and
/// never affects its siblings. Writes <out>/sweep.csv and one run directory
/// per value when `out` is non-empty.
std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis, std::span<const std::string> values,
                                const std::filesystem::path& out = {}, std::size_t threads = 0);

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

/// Exponent, shaper and learning rate for steps 0..T.
void write_schedule_csv(std::ostream& os, const RunConfig& cfg);

/// Mode-model trajectory in long format: step,mode,<second_moment|residual>
/// plus pi_t,omega_t when metrics are requested.
void write_simulation_csv(std::ostream& os, const RunConfig& cfg);

/// fast_spectral against exact shaping on random matrices with a prescribed
/// condition number: instance,p,frobenius_error,max_singular_value_error.
void write_compare_csv(std::ostream& os, const RunConfig& cfg);

/// Random rows x cols matrix with singular values log-spaced in [1/condition, 1].
Matrix conditioned_matrix(std::size_t rows, std::size_t cols, double condition, Rng& rng);

}  // namespace specshape

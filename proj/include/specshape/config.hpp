#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "specshape/mode_model.hpp"
#include "specshape/models.hpp"
#include "specshape/optimizers.hpp"

namespace specshape {

enum class TaskKind { Quadratic, Mlp };

std::string_view to_string(TaskKind k) noexcept;
TaskKind parse_task_kind(std::string_view name);

struct TaskConfig {
  TaskKind kind = TaskKind::Quadratic;
  QuadraticSpectrumParams quadratic;
  ClusterParams clusters;
  std::size_t hidden = 64;
  LossSpec loss;
  std::size_t eval_samples = 4096;
};

struct ProbeConfig {
  std::size_t stride = 0;  // 0 disables probing
  std::size_t k = 0;       // 0 means min(256, min(m, n))
  std::size_t batches = 32;
  std::size_t probe_set = 8;
  std::size_t bucket_size = kDefaultBucketSize;
  std::string param;  // empty means the first matrix parameter
};

struct SimulateConfig {
  ModeModelConfig model;
  SimulationMode mode = SimulationMode::ClosedForm;
  NoiseKind noise = NoiseKind::Gaussian;
  bool metrics = false;
  std::size_t bucket_size = kDefaultBucketSize;
};

struct CompareConfig {
  std::size_t rows = 32;
  std::size_t cols = 64;
  std::vector<double> exponents{-0.05, -0.1, -0.25};
  std::size_t instances = 10;
  double condition = 100.0;
};

struct RunConfig {
  // Both are required by train, probe and sweep; simulate, schedule and
  // compare-exact ignore them.
  bool has_task = false;
  bool has_optimizer = false;

  TaskConfig task;
  OptimizerKind optimizer = OptimizerKind::DynMuon;
  OptimizerHyper hyper;  // lr_schedule and schedule.total_steps follow total_steps
  LrSchedule lr;
  bool lr_decay = true;  // false: constant learning rate

  std::uint64_t seed = 0;
  std::size_t total_steps = 1000;
  std::size_t batch_size = 32;
  std::size_t eval_stride = 50;
  bool wall_clock = false;
  std::optional<double> target_loss;
  std::filesystem::path out;

  ProbeConfig probe;
  SimulateConfig simulate;
  bool has_simulate = false;
  CompareConfig compare;
};

/// Strict `key = value` parser. Unknown or repeated keys and malformed values
/// raise ParseError with the 1-based line; out-of-range settings raise
/// ValidationError.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

/// Copies total_steps and the lr settings into the optimizer hypers.
void synchronize(RunConfig& cfg);

/// Re-checks every invariant; used after programmatic edits (sweeps).
void validate(const RunConfig& cfg);

/// Throws ValidationError unless task.kind and optimizer.kind were given.
void require_training_keys(const RunConfig& cfg);

/// Every key with its effective value, one per line, in key-table order.
/// parse_config_text(resolved_text(c)) reproduces c.
std::string resolved_text(const RunConfig& cfg);

/// Names of all accepted keys, in key-table order.
std::vector<std::string_view> config_keys();

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace specshape

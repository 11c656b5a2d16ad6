#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "specshape/matrix.hpp"
#include "specshape/schedule.hpp"
#include "specshape/spectral.hpp"

namespace specshape {

using ParamMap = std::map<std::string, Matrix>;

/// Linear warmup over warmup_frac*T steps, then cosine decay to
/// warmdown_ratio*base_lr at t = T.
struct LrSchedule {
  double warmup_frac = 0.01;
  double warmdown_ratio = 0.2;
  std::size_t total_steps = 1000;
};

void validate(const LrSchedule& s);
double lr_at(const LrSchedule& s, double base_lr, std::size_t t);

enum class OptimizerKind { DynMuon, Muon, AdamW, Sgd };

std::string_view to_string(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer_kind(std::string_view name);

struct OptimizerHyper {
  double base_lr = 0.01;
  double momentum_beta = 0.95;
  bool nesterov = false;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  // Vectors and scalars under Muon/DynMuon are stepped with AdamW at this rate.
  double scalar_lr = 0.001;
  // Multiply shaped directions by sqrt(max(rows, cols)).
  bool shape_scale = false;
  SpectralSchedule schedule;
  NewtonSchulzConfig ns;
  // Constant base_lr when absent.
  std::optional<LrSchedule> lr_schedule;

  /// Defaults per optimizer: lr 0.01 for Muon/DynMuon/SGD, 0.002 for AdamW.
  static OptimizerHyper defaults(OptimizerKind kind);

  double lr(std::size_t t) const;
};

void validate(const OptimizerHyper& h);

struct OptimizerState {
  std::size_t step = 0;
  std::map<std::string, Matrix> momentum_buffers;       // M_t, or AdamW first moment
  std::map<std::string, Matrix> second_moment_buffers;  // AdamW only
  OptimizerHyper hyper;
};

/// What one call did, for logging.
struct StepInfo {
  double lr = 0.0;
  ShaperChoice shaper{ShaperKind::RawUpdate, 1.0};
};

/// Parameters with both dimensions > 1 are "matrix" parameters; the spectral
/// optimizers route everything else through AdamW.
bool is_matrix_param(const Matrix& m) noexcept;

/// Momentum M = beta*M + G, anchored shaper chosen from the schedule at t,
/// decoupled weight decay, then W -= lr(t) * scale * D.
StepInfo dynmuon_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t);

/// dynmuon_step with the shaper pinned to Newton-Schulz (p = 0).
StepInfo muon_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t);

StepInfo adamw_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t);

/// Heavy-ball SGD: M = beta*M + G, W <- (1 - lr*wd) W - lr*M.
StepInfo sgd_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t);

StepInfo apply_step(OptimizerKind kind, OptimizerState& state, ParamMap& params, const ParamMap& grads,
                    std::size_t t);

/// Applies an explicitly chosen shaper to a momentum matrix; the zero-norm
/// guard returns the zero matrix.
Matrix shape_direction(const Matrix& momentum, const ShaperChoice& choice, const NewtonSchulzConfig& ns);

/// Text checkpoint: a "step <n>" line, then per buffer a metadata line
/// "buffer <momentum|second_moment> <name>" followed by the matrix text.
void save_state(const std::filesystem::path& path, const OptimizerState& state);
OptimizerState load_state(const std::filesystem::path& path, const OptimizerHyper& hyper);

}  // namespace specshape

#include "specshape/optimizers.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "specshape/error.hpp"

namespace specshape {
namespace {

constexpr double kZeroMomentumGuard = 1e-30;

void check_inputs(const ParamMap& params, const ParamMap& grads) {
  for (const auto& [name, w] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw Error(ErrorKind::ShapeMismatch, "missing gradient for '" + name + "'");
    if (!it->second.same_shape(w)) throw Error(ErrorKind::ShapeMismatch, "gradient shape differs for '" + name + "'");
    require_finite(it->second, ("gradient '" + name + "'").c_str());
  }
  if (grads.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "gradient for unknown parameter");
}

Matrix& buffer_for(std::map<std::string, Matrix>& buffers, const std::string& name, const Matrix& like) {
  auto [it, inserted] = buffers.try_emplace(name, like.rows(), like.cols());
  if (!it->second.same_shape(like)) throw Error(ErrorKind::ShapeMismatch, "buffer shape differs for '" + name + "'");
  return it->second;
}

void adamw_update(OptimizerState& state, const std::string& name, Matrix& w, const Matrix& g, double lr,
                  double weight_decay) {
  const OptimizerHyper& h = state.hyper;
  Matrix& m = buffer_for(state.momentum_buffers, name, w);
  Matrix& v = buffer_for(state.second_moment_buffers, name, w);
  const double k = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(h.adam_beta1, k);
  const double bc2 = 1.0 - std::pow(h.adam_beta2, k);
  if (weight_decay != 0.0) w *= 1.0 - lr * weight_decay;
  auto md = m.data();
  auto vd = v.data();
  auto wd = w.data();
  const auto gd = g.data();
  for (std::size_t i = 0; i < wd.size(); ++i) {
    md[i] = h.adam_beta1 * md[i] + (1.0 - h.adam_beta1) * gd[i];
    vd[i] = h.adam_beta2 * vd[i] + (1.0 - h.adam_beta2) * gd[i] * gd[i];
    const double mhat = md[i] / bc1;
    const double vhat = vd[i] / bc2;
    wd[i] -= lr * mhat / (std::sqrt(vhat) + h.adam_eps);
  }
}

enum class Pin { Scheduled, Muon };

StepInfo spectral_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t, Pin pin) {
  check_inputs(params, grads);
  const OptimizerHyper& h = state.hyper;
  StepInfo info;
  info.lr = h.lr(t);
  info.shaper = pin == Pin::Muon ? ShaperChoice{ShaperKind::NewtonSchulz, 0.0} : select_shaper(h.schedule, t);
  const double lr_factor = h.base_lr > 0.0 ? info.lr / h.base_lr : 0.0;

  for (auto& [name, w] : params) {
    const Matrix& g = grads.at(name);
    if (!is_matrix_param(w)) {
      adamw_update(state, name, w, g, h.scalar_lr * lr_factor, 0.0);
      continue;
    }
    Matrix& m = buffer_for(state.momentum_buffers, name, w);
    m *= h.momentum_beta;
    m += g;
    Matrix direction = shape_direction(h.nesterov ? g + h.momentum_beta * m : m, info.shaper, h.ns);
    const double scale =
        h.shape_scale ? std::sqrt(static_cast<double>(std::max(w.rows(), w.cols()))) : 1.0;
    if (h.weight_decay != 0.0) w *= 1.0 - info.lr * h.weight_decay;
    add_scaled(w, -info.lr * scale, direction);
    require_finite(w, ("parameter '" + name + "'").c_str());
  }
  ++state.step;
  return info;
}

}  // namespace

void validate(const LrSchedule& s) {
  if (!(s.warmup_frac >= 0.0 && s.warmup_frac < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "lr schedule: warmup_frac must lie in [0,1)");
  }
  if (!(s.warmdown_ratio > 0.0 && s.warmdown_ratio <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "lr schedule: warmdown_ratio must lie in (0,1]");
  }
  if (s.total_steps == 0) throw Error(ErrorKind::InvalidConfig, "lr schedule: total_steps must be positive");
}

double lr_at(const LrSchedule& s, double base_lr, std::size_t t) {
  if (t > s.total_steps) throw Error(ErrorKind::StepOutOfRange, "lr_at: step beyond total_steps");
  const double total = static_cast<double>(s.total_steps);
  const double warmup = s.warmup_frac * total;
  const double step = static_cast<double>(t);
  if (step < warmup) return base_lr * step / warmup;
  const double span = total - warmup;
  const double progress = span > 0.0 ? (step - warmup) / span : 1.0;
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return base_lr * (s.warmdown_ratio + (1.0 - s.warmdown_ratio) * cosine);
}

std::string_view to_string(OptimizerKind k) noexcept {
  switch (k) {
    case OptimizerKind::DynMuon: return "dynmuon";
    case OptimizerKind::Muon: return "muon";
    case OptimizerKind::AdamW: return "adamw";
    case OptimizerKind::Sgd: return "sgd";
  }
  return "unknown";
}

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "dynmuon") return OptimizerKind::DynMuon;
  if (name == "muon") return OptimizerKind::Muon;
  if (name == "adamw") return OptimizerKind::AdamW;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw Error(ErrorKind::InvalidConfig, "unknown optimizer '" + std::string(name) + "'");
}

OptimizerHyper OptimizerHyper::defaults(OptimizerKind kind) {
  OptimizerHyper h;
  if (kind == OptimizerKind::AdamW) h.base_lr = 0.002;
  return h;
}

double OptimizerHyper::lr(std::size_t t) const { return lr_schedule ? lr_at(*lr_schedule, base_lr, t) : base_lr; }

void validate(const OptimizerHyper& h) {
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!(finite_nonneg(h.base_lr) && h.base_lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "optimizer: lr must be positive");
  if (!(h.momentum_beta >= 0.0 && h.momentum_beta < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "optimizer: momentum must lie in [0,1)");
  }
  if (!finite_nonneg(h.weight_decay)) throw Error(ErrorKind::InvalidConfig, "optimizer: weight_decay must be >= 0");
  if (!(h.adam_beta1 >= 0.0 && h.adam_beta1 < 1.0 && h.adam_beta2 >= 0.0 && h.adam_beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "optimizer: adam betas must lie in [0,1)");
  }
  if (!(finite_nonneg(h.adam_eps) && h.adam_eps > 0.0)) throw Error(ErrorKind::InvalidConfig, "optimizer: adam_eps must be positive");
  if (!(finite_nonneg(h.scalar_lr) && h.scalar_lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "optimizer: scalar_lr must be positive");
  validate(h.schedule);
  validate(h.ns);
  if (h.lr_schedule) validate(*h.lr_schedule);
}

bool is_matrix_param(const Matrix& m) noexcept { return m.rows() > 1 && m.cols() > 1; }

Matrix shape_direction(const Matrix& momentum, const ShaperChoice& choice, const NewtonSchulzConfig& ns) {
  if (choice.kind == ShaperKind::RawUpdate) return momentum;
  if (frobenius_norm(momentum) < kZeroMomentumGuard) return Matrix(momentum.rows(), momentum.cols());
  if (choice.kind == ShaperKind::NewtonSchulz) return newton_schulz(momentum, ns);
  return fast_spectral(momentum, choice.exponent, ns);
}

StepInfo dynmuon_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t) {
  return spectral_step(state, params, grads, t, Pin::Scheduled);
}

StepInfo muon_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t) {
  return spectral_step(state, params, grads, t, Pin::Muon);
}

StepInfo adamw_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t) {
  check_inputs(params, grads);
  StepInfo info;
  info.lr = state.hyper.lr(t);
  for (auto& [name, w] : params) {
    adamw_update(state, name, w, grads.at(name), info.lr, state.hyper.weight_decay);
    require_finite(w, ("parameter '" + name + "'").c_str());
  }
  ++state.step;
  return info;
}

StepInfo sgd_step(OptimizerState& state, ParamMap& params, const ParamMap& grads, std::size_t t) {
  check_inputs(params, grads);
  const OptimizerHyper& h = state.hyper;
  StepInfo info;
  info.lr = h.lr(t);
  for (auto& [name, w] : params) {
    Matrix& m = buffer_for(state.momentum_buffers, name, w);
    m *= h.momentum_beta;
    m += grads.at(name);
    if (h.weight_decay != 0.0) w *= 1.0 - info.lr * h.weight_decay;
    add_scaled(w, -info.lr, h.nesterov ? grads.at(name) + h.momentum_beta * m : m);
    require_finite(w, ("parameter '" + name + "'").c_str());
  }
  ++state.step;
  return info;
}

StepInfo apply_step(OptimizerKind kind, OptimizerState& state, ParamMap& params, const ParamMap& grads,
                    std::size_t t) {
  switch (kind) {
    case OptimizerKind::DynMuon: return dynmuon_step(state, params, grads, t);
    case OptimizerKind::Muon: return muon_step(state, params, grads, t);
    case OptimizerKind::AdamW: return adamw_step(state, params, grads, t);
    case OptimizerKind::Sgd: return sgd_step(state, params, grads, t);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown optimizer kind");
}

void save_state(const std::filesystem::path& path, const OptimizerState& state) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << "step " << state.step << '\n';
  auto dump = [&](const char* kind, const std::map<std::string, Matrix>& buffers) {
    for (const auto& [name, m] : buffers) {
      os << "buffer " << kind << ' ' << name << '\n';
      write_text(os, m);
    }
  };
  dump("momentum", state.momentum_buffers);
  dump("second_moment", state.second_moment_buffers);
}

OptimizerState load_state(const std::filesystem::path& path, const OptimizerHyper& hyper) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  OptimizerState state;
  state.hyper = hyper;
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::ParseError, 1, "missing step line");
  {
    std::istringstream ss(line);
    std::string key;
    if (!(ss >> key >> state.step) || key != "step") throw Error(ErrorKind::ParseError, 1, "expected 'step <n>'");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tag, kind, name;
    if (!(ss >> tag >> kind >> name) || tag != "buffer") throw Error(ErrorKind::ParseError, 0, "bad buffer line: " + line);
    Matrix m = read_text(is);
    if (kind == "momentum") {
      state.momentum_buffers[name] = std::move(m);
    } else if (kind == "second_moment") {
      state.second_moment_buffers[name] = std::move(m);
    } else {
      throw Error(ErrorKind::ParseError, 0, "unknown buffer kind '" + kind + "'");
    }
  }
  return state;
}

}  // namespace specshape

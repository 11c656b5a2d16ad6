#include "specshape/mode_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <boost/math/special_functions/erf.hpp>

#include "specshape/error.hpp"

namespace specshape {
namespace {

void require_finite_value(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

void require_curvature(double h) {
  if (!(h > 0.0 && h <= 1.0)) throw Error(ErrorKind::InvalidConfig, "curvature must lie in (0, 1]");
}

std::uint64_t fnv_mix(std::uint64_t hash, std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    hash ^= (word >> (8 * b)) & 0xffu;
    hash *= 0x100000001b3ull;
  }
  return hash;
}

double standard_normal_quantile(double u) {
  // erfc_inv keeps full relative precision in both tails.
  if (u < 0.5) return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
  return std::sqrt(2.0) * boost::math::erfc_inv(2.0 * (1.0 - u));
}

std::vector<std::size_t> order_by_curvature(std::span<const double> curvature) {
  std::vector<std::size_t> idx(curvature.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return curvature[a] > curvature[b]; });
  return idx;
}

void check_metric_inputs(std::span<const double> values, std::size_t n, std::size_t bucket_size, const char* what) {
  if (values.size() != n) throw Error(ErrorKind::ShapeMismatch, std::string(what) + " length differs");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
    if (!(v > 0.0)) throw Error(ErrorKind::NonPositiveInput, std::string(what) + " must be strictly positive");
  }
  if (bucket_size == 0 || n < 2 * bucket_size) {
    throw Error(ErrorKind::TooFewModes, "signal metrics need at least 2*bucket_size modes");
  }
}

struct Buckets {
  std::vector<std::size_t> strong;
  std::vector<std::size_t> flat;
};

Buckets make_buckets(std::span<const double> curvature, std::size_t bucket_size) {
  const auto idx = order_by_curvature(curvature);
  Buckets b;
  b.strong.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(bucket_size));
  b.flat.assign(idx.end() - static_cast<std::ptrdiff_t>(bucket_size), idx.end());
  return b;
}

double bucket_median(std::span<const double> values, const std::vector<std::size_t>& bucket) {
  std::vector<double> picked;
  picked.reserve(bucket.size());
  for (std::size_t i : bucket) picked.push_back(values[i]);
  return lower_median(std::move(picked));
}

}  // namespace

void validate(const ModeModelConfig& cfg) {
  const std::size_t n = cfg.curvatures.size();
  if (n == 0) throw Error(ErrorKind::InvalidConfig, "mode model: no modes");
  if (cfg.noise_levels.size() != n || cfg.initial_residuals.size() != n) {
    throw Error(ErrorKind::InvalidConfig, "mode model: curvatures, noise_levels and initial_residuals differ in length");
  }
  double h_max = 0.0;
  for (double h : cfg.curvatures) {
    require_finite_value(h, "curvature");
    require_curvature(h);
    h_max = std::max(h_max, h);
  }
  if (h_max != 1.0) throw Error(ErrorKind::InvalidConfig, "mode model: largest curvature must be 1");
  for (double c : cfg.noise_levels) {
    require_finite_value(c, "noise level");
    if (c < 0.0) throw Error(ErrorKind::InvalidConfig, "mode model: noise levels must be >= 0");
  }
  for (double d : cfg.initial_residuals) require_finite_value(d, "initial residual");
  require_finite_value(cfg.kappa, "kappa");
  require_finite_value(cfg.eta, "eta");
  require_finite_value(cfg.exponent, "exponent");
  if (!(cfg.kappa > 0.0)) throw Error(ErrorKind::InvalidConfig, "mode model: kappa must be positive");
  if (!(cfg.eta > 0.0)) throw Error(ErrorKind::InvalidConfig, "mode model: eta must be positive");
  if (cfg.steps == 0) throw Error(ErrorKind::InvalidConfig, "mode model: steps must be positive");
}

double mode_multiplier(double h, double kappa, double eta, double p) {
  require_curvature(h);
  const double m = 1.0 - eta * kappa * std::pow(h, 0.5 * (p + 1.0));
  require_finite_value(m, "mode multiplier");
  return m;
}

double mode_step(double delta, double h, double kappa, double eta, double p, double xi) {
  const double out = mode_multiplier(h, kappa, eta, p) * delta - eta * std::pow(h, 0.5 * (p - 1.0)) * xi;
  require_finite_value(out, "mode_step result");
  return out;
}

double second_moment_step(double m2, double h, double kappa, double eta, double p, double c) {
  if (c < 0.0) throw Error(ErrorKind::InvalidConfig, "noise level must be >= 0");
  if (m2 < 0.0) throw Error(ErrorKind::InvalidConfig, "second moment must be >= 0");
  const double a = mode_multiplier(h, kappa, eta, p);
  const double out = a * a * m2 + eta * eta * std::pow(h, p - 1.0) * c;
  require_finite_value(out, "second_moment_step result");
  return out;
}

std::string_view to_string(SimulationMode m) noexcept {
  return m == SimulationMode::ClosedForm ? "closed-form" : "monte-carlo";
}

std::string_view to_string(NoiseKind k) noexcept { return k == NoiseKind::Gaussian ? "gaussian" : "rademacher"; }

SimulationMode parse_simulation_mode(std::string_view name) {
  if (name == "closed-form") return SimulationMode::ClosedForm;
  if (name == "monte-carlo") return SimulationMode::MonteCarlo;
  throw Error(ErrorKind::InvalidConfig, "unknown simulation mode '" + std::string(name) + "'");
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "gaussian") return NoiseKind::Gaussian;
  if (name == "rademacher") return NoiseKind::Rademacher;
  throw Error(ErrorKind::InvalidConfig, "unknown noise kind '" + std::string(name) + "'");
}

std::vector<std::vector<double>> ModeTrajectory::second_moments() const {
  if (mode == SimulationMode::ClosedForm) return values;
  auto out = values;
  for (auto& row : out) {
    for (double& v : row) v *= v;
  }
  return out;
}

std::uint64_t config_hash(const ModeModelConfig& cfg) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  auto mix_all = [&](const std::vector<double>& v) {
    hash = fnv_mix(hash, v.size());
    for (double x : v) hash = fnv_mix(hash, std::bit_cast<std::uint64_t>(x));
  };
  mix_all(cfg.curvatures);
  mix_all(cfg.noise_levels);
  mix_all(cfg.initial_residuals);
  hash = fnv_mix(hash, std::bit_cast<std::uint64_t>(cfg.kappa));
  hash = fnv_mix(hash, std::bit_cast<std::uint64_t>(cfg.eta));
  hash = fnv_mix(hash, std::bit_cast<std::uint64_t>(cfg.exponent));
  hash = fnv_mix(hash, cfg.steps);
  return hash;
}

double draw_noise(Rng& rng, NoiseKind kind, double variance) {
  const double sd = std::sqrt(variance);
  if (kind == NoiseKind::Gaussian) return sd * rng.normal();
  return (rng.next() >> 63) ? sd : -sd;
}

namespace {

ModeTrajectory run_closed_form(const ModeModelConfig& cfg) {
  ModeTrajectory traj;
  traj.mode = SimulationMode::ClosedForm;
  traj.config_hash = config_hash(cfg);
  const std::size_t n = cfg.curvatures.size();
  std::vector<double> m2(n);
  for (std::size_t i = 0; i < n; ++i) m2[i] = cfg.initial_residuals[i] * cfg.initial_residuals[i];
  traj.values.reserve(cfg.steps + 1);
  traj.values.push_back(m2);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    bool diverged = false;
    for (std::size_t i = 0; i < n; ++i) {
      m2[i] = second_moment_step(m2[i], cfg.curvatures[i], cfg.kappa, cfg.eta, cfg.exponent, cfg.noise_levels[i]);
      diverged = diverged || m2[i] > kDivergenceThreshold;
    }
    traj.values.push_back(m2);
    if (diverged) {
      traj.status = TrajectoryStatus::Diverged;
      traj.diverged_step = t;
      break;
    }
  }
  return traj;
}

}  // namespace

ModeTrajectory simulate_replica(const ModeModelConfig& cfg, std::uint64_t seed, std::uint64_t replica,
                                NoiseKind noise) {
  validate(cfg);
  ModeTrajectory traj;
  traj.mode = SimulationMode::MonteCarlo;
  traj.config_hash = config_hash(cfg);
  traj.seed = seed;
  Rng rng = stream(seed, "mode-model", replica);
  const std::size_t n = cfg.curvatures.size();
  std::vector<double> delta = cfg.initial_residuals;
  traj.values.reserve(cfg.steps + 1);
  traj.values.push_back(delta);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    bool diverged = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = draw_noise(rng, noise, cfg.noise_levels[i]);
      delta[i] = mode_step(delta[i], cfg.curvatures[i], cfg.kappa, cfg.eta, cfg.exponent, xi);
      diverged = diverged || delta[i] * delta[i] > kDivergenceThreshold;
    }
    traj.values.push_back(delta);
    if (diverged) {
      traj.status = TrajectoryStatus::Diverged;
      traj.diverged_step = t;
      break;
    }
  }
  return traj;
}

ModeTrajectory simulate_trajectory(const ModeModelConfig& cfg, SimulationMode mode, std::optional<std::uint64_t> seed,
                                   NoiseKind noise) {
  validate(cfg);
  if (mode == SimulationMode::ClosedForm) {
    ModeTrajectory traj = run_closed_form(cfg);
    traj.seed = seed;
    return traj;
  }
  if (!seed) throw Error(ErrorKind::SeedRequired, "Monte Carlo simulation needs a seed");
  return simulate_replica(cfg, *seed, 0, noise);
}

MomentEstimate monte_carlo_moments(const ModeModelConfig& cfg, std::uint64_t seed, std::size_t replicas,
                                   NoiseKind noise) {
  validate(cfg);
  if (replicas < 2) throw Error(ErrorKind::InvalidConfig, "need at least two replicas");
  const std::size_t n = cfg.curvatures.size();
  const std::size_t rows = cfg.steps + 1;
  std::vector<std::vector<double>> mean(rows, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> m2(rows, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < replicas; ++r) {
    const ModeTrajectory traj = simulate_replica(cfg, seed, r, noise);
    if (traj.status == TrajectoryStatus::Diverged) {
      throw Error(ErrorKind::Diverged, "Monte Carlo replica diverged at step " + std::to_string(*traj.diverged_step));
    }
    const double k = static_cast<double>(r + 1);
    for (std::size_t t = 0; t < rows; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        const double x = traj.values[t][i] * traj.values[t][i];
        const double d = x - mean[t][i];
        mean[t][i] += d / k;
        m2[t][i] += d * (x - mean[t][i]);
      }
    }
  }
  MomentEstimate est;
  est.mean = mean;
  est.standard_error = std::move(m2);
  const double count = static_cast<double>(replicas);
  for (auto& row : est.standard_error) {
    for (double& v : row) v = std::sqrt(v / (count - 1.0) / count);
  }
  return est;
}

double one_step_second_moment_mc(double delta, double h, double kappa, double eta, double p, double c,
                                 std::size_t draws, Rng& rng, Sampling sampling) {
  if (draws == 0) throw Error(ErrorKind::InvalidConfig, "need at least one draw");
  if (c < 0.0) throw Error(ErrorKind::InvalidConfig, "noise level must be >= 0");
  const double sd = std::sqrt(c);
  const double n = static_cast<double>(draws);
  double sum = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    double z;
    if (sampling == Sampling::Stratified) {
      z = standard_normal_quantile((static_cast<double>(k) + rng.uniform()) / n);
    } else {
      z = rng.normal();
    }
    const double next = mode_step(delta, h, kappa, eta, p, sd * z);
    sum += next * next;
  }
  return sum / n;
}

ExponentSweep optimal_exponent_sweep(const ModeModelConfig& cfg, std::span<const double> p_grid,
                                     std::size_t horizon) {
  if (p_grid.empty()) throw Error(ErrorKind::InvalidConfig, "exponent grid is empty");
  ExponentSweep sweep;
  sweep.p_grid.assign(p_grid.begin(), p_grid.end());
  for (double p : p_grid) {
    ModeModelConfig run = cfg;
    run.exponent = p;
    run.steps = horizon;
    const ModeTrajectory traj = simulate_trajectory(run, SimulationMode::ClosedForm);
    if (traj.status == TrajectoryStatus::Diverged) {
      sweep.terminal_total.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    const auto& last = traj.values.back();
    sweep.terminal_total.push_back(std::accumulate(last.begin(), last.end(), 0.0));
  }
  for (std::size_t k = 1; k < p_grid.size(); ++k) {
    const double best = sweep.terminal_total[sweep.argmin];
    const double cur = sweep.terminal_total[k];
    if (cur < best || (cur == best && p_grid[k] > p_grid[sweep.argmin])) sweep.argmin = k;
  }
  sweep.best_p = p_grid[sweep.argmin];
  return sweep;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::TooFewModes, "median of an empty set");
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

SignalMetrics signal_metrics(std::span<const double> residual_energy, std::span<const double> noise,
                             std::span<const double> curvature, std::size_t bucket_size) {
  const std::size_t n = curvature.size();
  check_metric_inputs(curvature, n, bucket_size, "curvature");
  check_metric_inputs(residual_energy, n, bucket_size, "residual energy");
  check_metric_inputs(noise, n, bucket_size, "noise level");
  const Buckets b = make_buckets(curvature, bucket_size);

  std::vector<double> log_energy(n);
  SignalMetrics m;
  m.noise_adjusted.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    log_energy[i] = std::log(residual_energy[i]);
    m.noise_adjusted[i] = log_energy[i] - std::log(noise[i]);
  }
  m.residual_shift = bucket_median(log_energy, b.strong) - bucket_median(log_energy, b.flat);
  m.flat_advantage = bucket_median(m.noise_adjusted, b.flat) - bucket_median(m.noise_adjusted, b.strong);
  m.strong_bucket = b.strong;
  m.flat_bucket = b.flat;
  return m;
}

double residual_shift(std::span<const double> residual_energy, std::span<const double> curvature,
                      std::size_t bucket_size) {
  const std::size_t n = curvature.size();
  check_metric_inputs(curvature, n, bucket_size, "curvature");
  check_metric_inputs(residual_energy, n, bucket_size, "residual energy");
  const Buckets b = make_buckets(curvature, bucket_size);
  std::vector<double> log_energy(n);
  for (std::size_t i = 0; i < n; ++i) log_energy[i] = std::log(residual_energy[i]);
  return bucket_median(log_energy, b.strong) - bucket_median(log_energy, b.flat);
}

}  // namespace specshape

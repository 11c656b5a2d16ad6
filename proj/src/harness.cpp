#include "specshape/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>
#include <thread>

#include "specshape/error.hpp"
#include "specshape/linalg.hpp"
#include "specshape/models.hpp"
#include "specshape/rng.hpp"
#include "specshape/schedule.hpp"
#include "specshape/spectral.hpp"

namespace specshape {
namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string opt(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); }

bool loss_diverged(double loss) { return !std::isfinite(loss) || loss > kLossDivergence; }

// Everything the training loop needs from a task.
class Task {
 public:
  virtual ~Task() = default;
  virtual ParamMap init() = 0;
  virtual double loss_grad(const ParamMap& params, std::size_t step, ParamMap& grads) = 0;
  virtual double eval_loss(const ParamMap& params) = 0;
  virtual ProbeInputs probe_inputs(const ParamMap& params, const std::string& name, std::size_t step) = 0;
};

class QuadraticTask final : public Task {
 public:
  QuadraticTask(const RunConfig& cfg) : cfg_(cfg), inst_(make_quadratic(cfg.task.quadratic, cfg.seed)) {}

  ParamMap init() override { return {{"w", inst_.w0}}; }

  double loss_grad(const ParamMap& params, std::size_t step, ParamMap& grads) override {
    Rng noise = stream(cfg_.seed, "train-noise", step);
    LossGrad lg = quadratic_loss_grad(inst_.problem, params.at("w"), &noise);
    grads["w"] = std::move(lg.grad);
    return lg.loss;
  }

  double eval_loss(const ParamMap& params) override { return quadratic_loss(inst_.problem, params.at("w")); }

  ProbeInputs probe_inputs(const ParamMap& params, const std::string& name, std::size_t step) override {
    if (name != "w") throw Error(ErrorKind::ValidationError, "quadratic task has no parameter '" + name + "'");
    const Matrix& w = params.at("w");
    QuadraticProblem clean = inst_.problem;
    clean.noise_std = 0.0;
    ProbeInputs in;
    in.gradient = [clean](const Matrix& x) { return quadratic_loss_grad(clean, x).grad; };
    for (std::size_t b = 0; b < cfg_.probe.batches; ++b) {
      Rng rng = stream(cfg_.seed, "probe-batch", step, b);
      in.batch_gradients.push_back(quadratic_loss_grad(inst_.problem, w, &rng).grad);
    }
    in.probe_gradient = in.gradient(w);
    add_scaled(in.probe_gradient, 1.0, probe_noise());
    return in;
  }

 private:
  // Mean noise of the fixed probe set, drawn once per run.
  const Matrix& probe_noise() {
    if (probe_noise_.empty()) {
      probe_noise_ = Matrix(inst_.w0.rows(), inst_.w0.cols());
      for (std::size_t j = 0; j < cfg_.probe.probe_set; ++j) {
        Rng rng = stream(cfg_.seed, "probe-set", j);
        add_scaled(probe_noise_, 1.0 / static_cast<double>(cfg_.probe.probe_set),
                   rng.normal_matrix(probe_noise_.rows(), probe_noise_.cols(), inst_.problem.noise_std));
      }
    }
    return probe_noise_;
  }

  const RunConfig& cfg_;
  QuadraticInstance inst_;
  Matrix probe_noise_;
};

class MlpTask final : public Task {
 public:
  MlpTask(const RunConfig& cfg) : cfg_(cfg), data_(cfg.task.clusters, cfg.seed) {
    Rng eval_rng = stream(cfg.seed, "eval");
    eval_ = data_.sample(cfg.task.eval_samples, eval_rng);
  }

  ParamMap init() override {
    Rng rng = stream(cfg_.seed, "init");
    MlpModel m = MlpModel::init(cfg_.task.clusters.dim, cfg_.task.hidden, cfg_.task.clusters.classes, rng);
    return {{"w1", std::move(m.w1)}, {"w2", std::move(m.w2)}};
  }

  double loss_grad(const ParamMap& params, std::size_t step, ParamMap& grads) override {
    Rng rng = stream(cfg_.seed, "train-batch", step);
    const Batch batch = data_.sample(cfg_.batch_size, rng);
    MlpLossGrad fb = mlp_forward_backward(model(params), batch, cfg_.task.loss);
    grads["w1"] = std::move(fb.grad_w1);
    grads["w2"] = std::move(fb.grad_w2);
    return fb.loss;
  }

  double eval_loss(const ParamMap& params) override { return mlp_loss(model(params), eval_, cfg_.task.loss); }

  ProbeInputs probe_inputs(const ParamMap& params, const std::string& name, std::size_t step) override {
    if (name != "w1" && name != "w2") throw Error(ErrorKind::ValidationError, "MLP has no parameter '" + name + "'");
    if (probe_set_.empty()) {
      for (std::size_t j = 0; j < cfg_.probe.probe_set; ++j) {
        Rng rng = stream(cfg_.seed, "probe-set", j);
        probe_set_.push_back(data_.sample(cfg_.batch_size, rng));
      }
    }
    const MlpModel base = model(params);
    const LossSpec loss = cfg_.task.loss;
    const bool first = name == "w1";
    auto grad_of = [first, loss](MlpModel m, const Matrix& w, const Batch& batch) {
      (first ? m.w1 : m.w2) = w;
      MlpLossGrad fb = mlp_forward_backward(m, batch, loss);
      return first ? std::move(fb.grad_w1) : std::move(fb.grad_w2);
    };
    ProbeInputs in;
    const std::vector<Batch>* set = &probe_set_;
    in.gradient = [base, set, grad_of](const Matrix& w) {
      Matrix sum(w.rows(), w.cols());
      for (const Batch& b : *set) add_scaled(sum, 1.0 / static_cast<double>(set->size()), grad_of(base, w, b));
      return sum;
    };
    const Matrix& w = params.at(name);
    for (std::size_t b = 0; b < cfg_.probe.batches; ++b) {
      Rng rng = stream(cfg_.seed, "probe-batch", step, b);
      in.batch_gradients.push_back(grad_of(base, w, data_.sample(cfg_.batch_size, rng)));
    }
    in.probe_gradient = in.gradient(w);
    return in;
  }

 private:
  static MlpModel model(const ParamMap& params) { return {params.at("w1"), params.at("w2")}; }

  const RunConfig& cfg_;
  ClusterData data_;
  Batch eval_;
  std::vector<Batch> probe_set_;
};

std::unique_ptr<Task> make_task(const RunConfig& cfg) {
  if (cfg.task.kind == TaskKind::Quadratic) return std::make_unique<QuadraticTask>(cfg);
  return std::make_unique<MlpTask>(cfg);
}

void fill_shaper(const RunConfig& cfg, std::size_t t, MetricsRow& row) {
  switch (cfg.optimizer) {
    case OptimizerKind::DynMuon: {
      const ShaperChoice choice = select_shaper(cfg.hyper.schedule, t);
      row.p_t = exponent_at(cfg.hyper.schedule, t);
      row.shaper = std::string(to_string(choice.kind));
      return;
    }
    case OptimizerKind::Muon:
      row.p_t = 0.0;
      row.shaper = std::string(to_string(ShaperKind::NewtonSchulz));
      return;
    case OptimizerKind::Sgd:
      row.p_t = 1.0;
      row.shaper = std::string(to_string(ShaperKind::RawUpdate));
      return;
    case OptimizerKind::AdamW:
      row.shaper = "adamw";
      return;
  }
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  os << contents;
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void write_outputs(const RunConfig& cfg, const std::filesystem::path& out, const RunResult& result, bool probing,
                   const OptimizerState& state) {
  std::filesystem::create_directories(out / "checkpoint");
  write_file(out / "config.resolved", resolved_text(cfg));
  {
    std::ostringstream ss;
    write_metrics_csv(ss, result.metrics);
    write_file(out / "metrics.csv", ss.str());
  }
  if (probing) {
    std::ostringstream ss;
    write_probes_csv(ss, result.probes);
    write_file(out / "probes.csv", ss.str());
  }
  {
    std::ostringstream ss;
    for (const auto& [name, m] : result.params) {
      ss << "param " << name << '\n';
      write_text(ss, m);
    }
    write_file(out / "checkpoint" / "params.txt", ss.str());
  }
  save_state(out / "checkpoint" / "optimizer.txt", state);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

RunResult run_train(const RunConfig& cfg, const TrainOptions& options) {
  require_training_keys(cfg);
  validate(cfg);
  auto task = make_task(cfg);
  RunResult result;
  result.params = task->init();
  OptimizerState state;
  state.hyper = cfg.hyper;

  const std::size_t stride = options.probe_stride.value_or(cfg.probe.stride);
  const std::string probe_param = cfg.probe.param.empty() ? result.params.begin()->first : cfg.probe.param;
  const auto start = std::chrono::steady_clock::now();
  const std::size_t total = cfg.total_steps;

  auto diverge = [&](std::size_t step, const std::string& why) {
    result.status = RunStatus::Diverged;
    result.diverged_step = step;
    result.message = "diverged at step " + std::to_string(step) + ": " + why;
  };

  for (std::size_t t = 0; t <= total; ++t) {
    ParamMap grads;
    double train_loss = 0.0;
    try {
      train_loss = task->loss_grad(result.params, t, grads);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      diverge(t, e.what());
      break;
    }
    if (loss_diverged(train_loss)) {
      diverge(t, "train loss " + format_double(train_loss));
      break;
    }
    if (t == 0 || t % cfg.eval_stride == 0 || t == total) {
      MetricsRow row;
      row.step = t;
      row.train_loss = train_loss;
      row.eval_loss = task->eval_loss(result.params);
      row.lr_t = cfg.hyper.lr(t);
      fill_shaper(cfg, t, row);
      if (cfg.wall_clock) {
        row.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      }
      const bool bad = loss_diverged(row.eval_loss);
      result.metrics.push_back(std::move(row));
      if (bad) {
        diverge(t, "eval loss " + format_double(result.metrics.back().eval_loss));
        break;
      }
    }
    if (stride > 0 && t % stride == 0) {
      const Matrix& w = result.params.at(probe_param);
      ProbeInputs inputs = task->probe_inputs(result.params, probe_param, t);
      const auto buf = state.momentum_buffers.find(probe_param);
      const bool use_momentum = buf != state.momentum_buffers.end() && frobenius_norm(buf->second) > 0.0;
      const Matrix& source = use_momentum ? buf->second : inputs.probe_gradient;
      const std::size_t k = cfg.probe.k ? cfg.probe.k : default_mode_count(w.rows(), w.cols());
      result.probes.push_back(probe_parameter(t, w, source, inputs, k, cfg.probe.bucket_size));
    }
    if (t == total) break;
    try {
      apply_step(cfg.optimizer, state, result.params, grads, t);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFinite) throw;
      diverge(t + 1, e.what());
      break;
    }
  }
  if (!options.out.empty()) write_outputs(cfg, options.out, result, stride > 0, state);
  return result;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricsRow> rows) {
  os << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    os << r.step << ',' << format_double(r.train_loss) << ',' << format_double(r.eval_loss) << ',' << opt(r.p_t) << ','
       << format_double(r.lr_t) << ',' << r.shaper << ',' << format_double(r.wall_ms) << '\n';
  }
}

void write_probes_csv(std::ostream& os, std::span<const ProbeReport> reports) {
  os << kProbesHeader << '\n';
  for (const ProbeReport& rep : reports) {
    for (const ModeProbe& m : rep.modes) {
      os << rep.step << ',' << m.rank << ',' << format_double(m.h_hat) << ',' << format_double(m.c_hat) << ','
         << opt(m.delta2_hat) << ',' << format_double(m.g_probe) << ",,,,,\n";
    }
    std::optional<double> pi, omega, beta, r2;
    if (rep.metrics) {
      pi = rep.metrics->residual_shift;
      omega = rep.metrics->flat_advantage;
    }
    if (rep.power_law) {
      beta = rep.power_law->beta;
      r2 = rep.power_law->r_squared;
    }
    os << rep.step << ",summary,,,,," << opt(pi) << ',' << opt(omega) << ',' << opt(beta) << ',' << opt(r2) << ','
       << opt(rep.u_flat_median) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::MalformedMetrics, "metrics file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) throw Error(ErrorKind::MalformedMetrics, "unexpected metrics header");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    auto bad = [&](const char* what) {
      return Error(ErrorKind::MalformedMetrics, "line " + std::to_string(line_no) + ": " + what);
    };
    if (f.size() != 7) throw bad("expected 7 fields");
    MetricsRow r;
    if (!parse_number(f[0], r.step)) throw bad("bad step");
    if (!parse_number(f[1], r.train_loss)) throw bad("bad train_loss");
    if (!parse_number(f[2], r.eval_loss)) throw bad("bad eval_loss");
    if (!f[3].empty()) {
      double p = 0.0;
      if (!parse_number(f[3], p)) throw bad("bad p_t");
      r.p_t = p;
    }
    if (!parse_number(f[4], r.lr_t)) throw bad("bad lr_t");
    r.shaper = std::string(f[5]);
    if (!parse_number(f[6], r.wall_ms)) throw bad("bad wall_ms");
    if (!rows.empty() && r.step <= rows.back().step) throw bad("steps must strictly increase");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return read_metrics_csv(is);
}

std::optional<std::size_t> steps_to_target(std::span<const MetricsRow> rows, double target) {
  for (const MetricsRow& r : rows) {
    if (r.eval_loss <= target) return r.step;
  }
  return std::nullopt;
}

std::optional<std::size_t> steps_to_target(const std::filesystem::path& metrics, double target) {
  const auto rows = read_metrics_csv(metrics);
  return steps_to_target(rows, target);
}

std::optional<double> eval_loss_at_fraction(std::span<const MetricsRow> rows, double fraction) {
  if (rows.empty()) return std::nullopt;
  const double limit = std::floor(fraction * static_cast<double>(rows.back().step));
  std::optional<double> out;
  for (const MetricsRow& r : rows) {
    if (static_cast<double>(r.step) <= limit) out = r.eval_loss;
  }
  return out;
}

std::string_view to_string(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::PMin: return "p_min";
    case SweepAxis::Lr: return "lr";
    case SweepAxis::Tau: return "tau";
    case SweepAxis::W: return "w";
    case SweepAxis::ScheduleShape: return "schedule_shape";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  for (SweepAxis a : {SweepAxis::PMin, SweepAxis::Lr, SweepAxis::Tau, SweepAxis::W, SweepAxis::ScheduleShape}) {
    if (to_string(a) == name) return a;
  }
  throw Error(ErrorKind::ValidationError, "unknown sweep axis '" + std::string(name) + "'");
}

RunConfig apply_sweep_value(const RunConfig& base, SweepAxis axis, std::string_view value) {
  RunConfig cfg = base;
  auto number = [&] {
    double v = 0.0;
    if (!parse_number(value, v) || !std::isfinite(v)) {
      throw Error(ErrorKind::ValidationError, "sweep value '" + std::string(value) + "' is not a number");
    }
    return v;
  };
  switch (axis) {
    case SweepAxis::PMin: cfg.hyper.schedule.p_min = number(); break;
    case SweepAxis::Lr: cfg.hyper.base_lr = number(); break;
    case SweepAxis::Tau: cfg.hyper.schedule.tau = number(); break;
    case SweepAxis::W: cfg.hyper.schedule.w = number(); break;
    case SweepAxis::ScheduleShape:
      try {
        cfg.hyper.schedule.shape = parse_schedule_shape(value);
      } catch (const Error& e) {
        throw Error(ErrorKind::ValidationError, e.what());
      }
      break;
  }
  synchronize(cfg);
  validate(cfg);
  return cfg;
}

std::vector<SweepRow> run_sweep(const RunConfig& base, SweepAxis axis, std::span<const std::string> values,
                                const std::filesystem::path& out, std::size_t threads) {
  if (values.empty()) throw Error(ErrorKind::ValidationError, "sweep needs at least one value");
  require_training_keys(base);
  std::vector<SweepRow> rows(values.size());

  auto run_one = [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.axis = std::string(to_string(axis));
    row.value = values[i];
    try {
      const RunConfig cfg = apply_sweep_value(base, axis, values[i]);
      TrainOptions opts;
      if (!out.empty()) opts.out = out / (row.axis + "=" + row.value);
      const RunResult r = run_train(cfg, opts);
      for (const MetricsRow& m : r.metrics) {
        if (std::isfinite(m.eval_loss) && (!row.best_eval_loss || m.eval_loss < *row.best_eval_loss)) {
          row.best_eval_loss = m.eval_loss;
        }
      }
      if (r.status == RunStatus::Diverged) {
        row.status = "diverged";
        row.diverged_step = r.diverged_step;
        row.message = r.message;
      } else {
        row.status = "ok";
        row.final_eval_loss = r.metrics.back().eval_loss;
      }
      if (cfg.target_loss) row.steps_to_target = steps_to_target(r.metrics, *cfg.target_loss);
    } catch (const Error& e) {
      row.status = e.kind() == ErrorKind::Diverged ? "diverged" : "error";
      row.message = e.what();
    }
  };

  std::size_t n_threads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < values.size(); i = next++) run_one(i);
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }

  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ostringstream ss;
    write_sweep_csv(ss, rows);
    write_file(out / "sweep.csv", ss.str());
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << kSweepHeader << '\n';
  for (const SweepRow& r : rows) {
    os << r.axis << ',' << r.value << ',' << r.status << ',' << opt(r.best_eval_loss) << ',' << opt(r.final_eval_loss)
       << ',' << opt(r.steps_to_target) << ',' << opt(r.diverged_step) << '\n';
  }
}

void write_schedule_csv(std::ostream& os, const RunConfig& cfg) {
  os << "step,p_t,shaper,lr_t\n";
  for (std::size_t t = 0; t <= cfg.total_steps; ++t) {
    const ShaperChoice choice = select_shaper(cfg.hyper.schedule, t);
    os << t << ',' << format_double(exponent_at(cfg.hyper.schedule, t)) << ',' << to_string(choice.kind) << ','
       << format_double(cfg.hyper.lr(t)) << '\n';
  }
}

void write_simulation_csv(std::ostream& os, const RunConfig& cfg) {
  if (!cfg.has_simulate) throw Error(ErrorKind::ValidationError, "config has no simulate.* keys");
  const SimulateConfig& sim = cfg.simulate;
  const std::size_t n = sim.model.curvatures.size();
  if (sim.metrics && n < 2 * sim.bucket_size) {
    throw Error(ErrorKind::ValidationError, "simulate.metrics needs at least 2*bucket_size modes");
  }
  const ModeTrajectory traj = simulate_trajectory(sim.model, sim.mode, cfg.seed, sim.noise);
  const auto energy = traj.second_moments();
  const bool noisy = std::all_of(sim.model.noise_levels.begin(), sim.model.noise_levels.end(),
                                 [](double c) { return c > 0.0; });
  os << "step,mode," << (sim.mode == SimulationMode::ClosedForm ? "second_moment" : "residual");
  if (sim.metrics) os << ",pi_t,omega_t";
  os << '\n';
  for (std::size_t t = 0; t < traj.values.size(); ++t) {
    std::optional<double> pi, omega;
    if (sim.metrics) {
      try {
        if (noisy) {
          const SignalMetrics m = signal_metrics(energy[t], sim.model.noise_levels, sim.model.curvatures, sim.bucket_size);
          pi = m.residual_shift;
          omega = m.flat_advantage;
        } else {
          pi = residual_shift(energy[t], sim.model.curvatures, sim.bucket_size);
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonPositiveInput) throw;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      os << t << ',' << i << ',' << format_double(traj.values[t][i]);
      if (sim.metrics) os << ',' << opt(pi) << ',' << opt(omega);
      os << '\n';
    }
  }
  if (traj.status == TrajectoryStatus::Diverged) {
    throw Error(ErrorKind::Diverged, "trajectory diverged at step " + std::to_string(*traj.diverged_step));
  }
}

Matrix conditioned_matrix(std::size_t rows, std::size_t cols, double condition, Rng& rng) {
  const std::size_t r = std::min(rows, cols);
  const Matrix u = orthonormalize(rng.normal_matrix(rows, r));
  const Matrix v = orthonormalize(rng.normal_matrix(cols, r));
  Matrix us = u;
  for (std::size_t k = 0; k < r; ++k) {
    const double sigma = r == 1 ? 1.0 : std::pow(condition, -static_cast<double>(k) / static_cast<double>(r - 1));
    for (std::size_t i = 0; i < rows; ++i) us(i, k) *= sigma;
  }
  return matmul_transposed(us, v);
}

void write_compare_csv(std::ostream& os, const RunConfig& cfg) {
  os << "instance,p,frobenius_error,max_singular_value_error\n";
  for (std::size_t i = 0; i < cfg.compare.instances; ++i) {
    Rng rng = stream(cfg.seed, "compare", i);
    const Matrix x = conditioned_matrix(cfg.compare.rows, cfg.compare.cols, cfg.compare.condition, rng);
    for (double p : cfg.compare.exponents) {
      const ShapingReport rep = shaping_error(x, p, cfg.hyper.ns);
      os << i << ',' << format_double(p) << ',' << format_double(rep.frobenius_error_vs_exact) << ','
         << format_double(rep.max_singular_value_error) << '\n';
    }
  }
}

}  // namespace specshape

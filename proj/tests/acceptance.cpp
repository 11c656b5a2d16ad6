// Acceptance checks A1-A10. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "specshape/config.hpp"
#include "specshape/harness.hpp"
#include "specshape/mode_model.hpp"
#include "specshape/models.hpp"
#include "specshape/probes.hpp"
#include "specshape/spectral.hpp"

using namespace specshape;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Records the worst value of a metric against its limit.
class Worst {
 public:
  Worst(std::string name, double limit) : name_(std::move(name)), limit_(limit) {}
  void add(double v) { worst_ = std::isnan(v) ? v : std::max(worst_, v); }
  bool ok() const { return !std::isnan(worst_) && worst_ <= limit_; }
  std::string str() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s %.3g (<= %.0e)", name_.c_str(), worst_, limit_);
    return buf;
  }

 private:
  std::string name_;
  double limit_;
  double worst_ = 0.0;
};

Outcome combine(std::initializer_list<const Worst*> parts) {
  Outcome o;
  for (const Worst* w : parts) {
    o.pass = o.pass && w->ok();
    if (!o.detail.empty()) o.detail += ", ";
    o.detail += w->str();
  }
  return o;
}

std::vector<double> eigen_singular_values(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(test::to_eigen(m));
  const Eigen::VectorXd s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

double asymmetry(const Matrix& s) { return max_abs_diff(s, s.transpose()) / std::max(max_abs(s), 1e-300); }

Outcome a1_exact_shaping() {
  Rng pick(101);
  Worst identity("p=1", 1e-8), unit("p=0", 1e-8), reciprocal("p=-1", 1e-8), direction("direction", 1e-8);
  for (int k = 0; k < 200; ++k) {
    const std::size_t rows = 1 + pick.below(64);
    const std::size_t cols = 1 + pick.below(128);
    const double condition = std::pow(10.0, 4.0 * pick.uniform());
    const Matrix x = test::conditioned(rows, cols, condition, 1000 + k);
    const std::vector<double> sx = eigen_singular_values(x);

    identity.add(max_abs_diff(exact_spectral_shape(x, 1.0), x) / max_abs(x));

    const Matrix y0 = exact_spectral_shape(x, 0.0);
    for (double s : eigen_singular_values(y0)) unit.add(std::abs(s - 1.0));

    const Matrix yinv = exact_spectral_shape(x, -1.0);
    const std::vector<double> sinv = eigen_singular_values(yinv);
    for (std::size_t i = 0; i < sx.size(); ++i) {
      const double expected = 1.0 / sx[sx.size() - 1 - i];
      reciprocal.add(std::abs(sinv[i] - expected) / expected);
    }
    // X Y^+ X = X for Y = U S^-1 V^T.
    direction.add(max_abs_diff(matmul(matmul_transposed(x, yinv), x), x) / max_abs(x));

    // X^T Y = V S^(1+p) V^T and X Y^T = U S^(1+p) U^T are symmetric exactly
    // when Y shares the singular directions of X.
    for (const Matrix* y : {&y0, &yinv}) {
      direction.add(asymmetry(transposed_matmul(x, *y)));
      direction.add(asymmetry(matmul_transposed(x, *y)));
    }
    const Matrix yhalf = exact_spectral_shape(x, 0.5);
    direction.add(asymmetry(transposed_matmul(x, yhalf)));
    direction.add(asymmetry(matmul_transposed(x, yhalf)));
  }
  return combine({&identity, &unit, &reciprocal, &direction});
}

Outcome a2_fast_spectral() {
  Rng pick(202);
  Worst oracle("eigen-oracle rel", 1e-10), equal("equal-spectrum rel", 1e-6);
  for (int k = 0; k < 100; ++k) {
    const std::size_t rows = 1 + pick.below(32);
    const std::size_t cols = 1 + pick.below(64);
    const Matrix x = test::random_matrix(rows, cols, 2000 + k);
    const Matrix y = newton_schulz(x);
    for (double p : {-0.05, -0.1, -0.25}) {
      const Matrix expected = test::fast_spectral_oracle(x, p, y);
      oracle.add(test::relative_gap(fast_spectral(x, p), expected));
    }
  }
  // Rank-one vectors have a single normalized eigenvalue 1, where the
  // Taylor correction is exact and the cubic iteration is at its fixed point.
  const NewtonSchulzConfig cubic = NewtonSchulzConfig::cubic(30);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + pick.below(63);
    Matrix x = test::random_matrix(1, n, 3000 + k);
    x *= std::pow(10.0, -3.0 + 6.0 * pick.uniform());
    if (k % 2 == 1) x = x.transpose();
    for (double p : {-0.05, -0.1, -0.25}) {
      const ShapingReport r = shaping_error(x, p, cubic);
      equal.add(r.frobenius_error_vs_exact);
      equal.add(r.max_singular_value_error / std::pow(frobenius_norm(x), p));
    }
  }
  return combine({&oracle, &equal});
}

Outcome a3_monte_carlo() {
  Rng grid(303);
  Rng rng(304);
  Worst rel("max rel", 0.01);
  for (int k = 0; k < 1000; ++k) {
    const double h = 0.001 + 0.999 * grid.uniform();
    const double kappa = 0.1 + 1.9 * grid.uniform();
    const double eta = 0.01 + 0.49 * grid.uniform();
    const double p = -1.0 + 2.0 * grid.uniform();
    const double c = std::pow(10.0, -4.0 + 4.0 * grid.uniform());
    const double delta = -2.0 + 4.0 * grid.uniform();
    const double expected = second_moment_step(delta * delta, h, kappa, eta, p, c);
    const double mc = one_step_second_moment_mc(delta, h, kappa, eta, p, c, 100000, rng, Sampling::Stratified);
    rel.add(std::abs(mc / expected - 1.0));
  }
  return combine({&rel});
}

Outcome a4_equalization() {
  ModeModelConfig cfg;
  cfg.curvatures = {1.0, 0.01};
  cfg.noise_levels = {0.0, 0.0};
  cfg.initial_residuals = {1.0, 1.0};
  cfg.exponent = -1.0;
  cfg.eta = 0.1;
  cfg.steps = 200;
  Worst moment("closed-form gap", 1e-12), residual("residual gap", 1e-12);
  const ModeTrajectory traj = simulate_trajectory(cfg, SimulationMode::ClosedForm);
  for (const auto& row : traj.values) moment.add(std::abs(row[0] - row[1]));
  double a = 1.0, b = 1.0;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    a = mode_step(a, 1.0, cfg.kappa, cfg.eta, -1.0, 0.0);
    b = mode_step(b, 0.01, cfg.kappa, cfg.eta, -1.0, 0.0);
    residual.add(std::abs(a - b));
  }
  Outcome o = combine({&moment, &residual});
  if (!(traj.values.back()[0] < 1e-8)) {
    o.pass = false;
    o.detail += ", trajectory did not decay";
  }
  return o;
}

Outcome a5_exponent_sweep() {
  Outcome o;
  auto check = [&](const std::string& name, const ModeModelConfig& cfg, const std::vector<double>& grid,
                   std::size_t horizon) {
    const ExponentSweep s = optimal_exponent_sweep(cfg, grid, horizon);
    const std::size_t brute = test::brute_argmin(cfg, grid, horizon);
    if (s.argmin != brute) {
      o.pass = false;
      o.detail += name + " argmin differs from brute force; ";
    }
    return s;
  };
  const std::vector<double> grid{-1.0, -0.75, -0.5, -0.25, -0.1, 0.0, 0.25, 0.5, 1.0};

  ModeModelConfig strong;
  strong.curvatures = {1.0, 0.1, 0.01};
  strong.noise_levels = {0.0, 0.0, 0.0};
  strong.initial_residuals = {1.0, 0.0, 0.0};
  const double strong_p = check("(i)", strong, grid, 100).best_p;

  ModeModelConfig overshoot;
  overshoot.curvatures = {1.0, 0.7, 0.5, 0.01};
  overshoot.noise_levels = {0.0, 0.0, 0.0, 0.0};
  overshoot.initial_residuals = {0.0, 1.0, 1.0, 0.0};
  overshoot.eta = 1.9;
  const double overshoot_p = check("(i')", overshoot, grid, 20).best_p;
  if (strong_p != grid.back() || overshoot_p != grid.back()) o.pass = false;

  ModeModelConfig flat;
  flat.curvatures = test::log_spaced(16, 1e-3);
  flat.initial_residuals.assign(16, 0.0);
  for (std::size_t i = 8; i < 16; ++i) flat.initial_residuals[i] = 1.0;
  flat.noise_levels.assign(16, 1e-6);
  const double low_p = check("(ii)", flat, grid, 100).best_p;
  if (!(low_p < 0.0)) o.pass = false;

  ModeModelConfig noisy = flat;
  for (double& c : noisy.noise_levels) c *= 100.0;
  const double high_p = check("(iii)", noisy, grid, 100).best_p;
  if (!(high_p >= low_p)) o.pass = false;

  char buf[160];
  std::snprintf(buf, sizeof buf, "(i) p*=%g, %g (grid max %g); (ii) p*=%g < 0; (iii) p*=%g >= %g", strong_p, overshoot_p,
                grid.back(), low_p, high_p, low_p);
  o.detail += buf;
  return o;
}

Outcome a6_residual_shift() {
  ModeModelConfig cfg;
  cfg.curvatures = test::log_spaced(32, 1e-3);
  cfg.noise_levels.assign(32, 0.0);
  cfg.initial_residuals.assign(32, 1.0);
  cfg.exponent = 0.0;
  cfg.eta = 0.1;
  cfg.steps = 200;
  const ModeTrajectory traj = simulate_trajectory(cfg, SimulationMode::ClosedForm);
  Outcome o;
  double prev = residual_shift(traj.values[0], cfg.curvatures);
  std::size_t violations = 0;
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const double pi = residual_shift(traj.values[t], cfg.curvatures);
    if (!(pi < prev)) ++violations;
    prev = pi;
  }
  o.pass = violations == 0 && prev < 0.0;
  char buf[128];
  std::snprintf(buf, sizeof buf, "Pi_0=%g Pi_T=%g, non-decreasing steps %zu/%zu",
                residual_shift(traj.values[0], cfg.curvatures), prev, violations, cfg.steps);
  o.detail = buf;
  return o;
}

// Mode along eigenvector i of H with a random unit right vector.
EmpiricalMode eigen_mode(const QuadraticInstance& inst, std::size_t i, Rng& rng) {
  EmpiricalMode mode;
  mode.left = inst.eigenvectors.column(i);
  std::vector<double> v(inst.w0.cols());
  rng.fill_normal(v);
  double n = 0.0;
  for (double x : v) n += x * x;
  for (double& x : v) x /= std::sqrt(n);
  mode.right = v;
  mode.rank_index = i;
  return mode;
}

Outcome a7_probes() {
  Worst hvp("hvp abs", 1e-6), noise("noise rel", 0.2), residual("residual rel", 0.05), power("power-law", 1e-10);
  QuadraticSpectrumParams params;
  params.rows = 16;
  params.cols = 12;
  params.h_min = 1e-2;
  params.kappa = 1.7;
  params.noise_std = 0.3;
  const QuadraticInstance inst = make_quadratic(params, 707);
  QuadraticProblem clean = inst.problem;
  clean.noise_std = 0.0;
  const GradientFn grad = [&clean](const Matrix& w) { return quadratic_loss_grad(clean, w).grad; };

  Rng rng(708);
  const Matrix probe = grad(inst.w0);
  const Matrix delta = inst.w0 - inst.problem.w_star;
  for (std::size_t i = 0; i < inst.spectrum.size(); ++i) {
    const EmpiricalMode mode = eigen_mode(inst, i, rng);
    const double h = hvp_curvature(grad, inst.w0, mode);
    hvp.add(std::abs(h - params.kappa * inst.spectrum[i]));
    const double truth = mode.project(delta) * mode.project(delta);
    residual.add(std::abs(residual_energy(mode.project(probe), h) - truth) / truth);
  }

  // Injected isotropic noise has variance noise_std^2 along any unit mode.
  std::vector<Matrix> batches;
  for (std::size_t b = 0; b < 512; ++b) {
    Rng stream_b = stream(709, "acceptance-batch", b);
    batches.push_back(quadratic_loss_grad(inst.problem, inst.w0, &stream_b).grad);
  }
  for (const EmpiricalMode& mode : extract_modes(probe, 8)) {
    noise.add(std::abs(noise_variance(batches, mode) / (params.noise_std * params.noise_std) - 1.0));
  }

  std::vector<double> hs, cs;
  for (int i = 0; i < 24; ++i) {
    hs.push_back(std::pow(10.0, -3.0 + 0.125 * i));
    cs.push_back(0.37 * std::pow(hs.back(), 1.4));
  }
  const PowerLawFit fit = fit_power_law(hs, cs);
  power.add(std::abs(fit.beta - 1.4));
  power.add(std::abs(fit.r_squared - 1.0));
  return combine({&hvp, &noise, &residual, &power});
}

Outcome a8_gradients() {
  Worst mlp("mlp rel", 1e-5), quad("quadratic rel", 1e-5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto [model, batch] = test::random_mlp_instance(8000 + seed);
    for (double lambda : {0.0, 0.5, 1.0}) {
      const test::MlpGradientCheck gap = test::check_mlp_gradients(model, batch, {lambda});
      mlp.add(gap.w1);
      mlp.add(gap.w2);
    }
    QuadraticSpectrumParams params;
    params.rows = 2 + seed % 7;
    params.cols = 1 + seed % 5;
    params.h_min = 0.05;
    params.kappa = 0.5 + 0.01 * static_cast<double>(seed);
    const QuadraticInstance inst = make_quadratic(params, 8500 + seed);
    const Matrix fd = test::finite_difference_gradient(
        [&](const Matrix& w) { return quadratic_loss(inst.problem, w); }, inst.w0);
    quad.add(test::relative_gap(quadratic_loss_grad(inst.problem, inst.w0).grad, fd));
  }
  return combine({&mlp, &quad});
}

const char* kA9Task =
    "task.kind = quadratic\ntask.rows = 32\ntask.cols = 64\ntask.h_min = 0.1\ntask.signal_tilt = 0.5\n"
    "task.noise_std = 0.02\nrun.total_steps = 2000\nrun.eval_stride = 50\n";

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Outcome a9_end_to_end() {
  std::vector<double> dyn, muon, fixed, dyn_stt, muon_stt;
  const double never = std::numeric_limits<double>::infinity();
  for (int seed = 1; seed <= 3; ++seed) {
    const std::string common = std::string(kA9Task) + "run.seed = " + std::to_string(seed) + "\n";
    const RunResult d = run_train(parse_config_text(common + "optimizer.kind = dynmuon\n"));
    const RunResult m = run_train(parse_config_text(common + "optimizer.kind = muon\n"));
    const RunResult f =
        run_train(parse_config_text(common + "optimizer.kind = dynmuon\nschedule.shape = fixed-negative\n"));
    auto final_loss = [&](const RunResult& r) { return r.status == RunStatus::Ok ? r.metrics.back().eval_loss : never; };
    dyn.push_back(final_loss(d));
    muon.push_back(final_loss(m));
    fixed.push_back(final_loss(f));
    const auto target = eval_loss_at_fraction(m.metrics, 0.8);
    auto stt = [&](const RunResult& r) {
      const auto s = target ? steps_to_target(r.metrics, *target) : std::nullopt;
      return s ? static_cast<double>(*s) : never;
    };
    dyn_stt.push_back(stt(d));
    muon_stt.push_back(stt(m));
  }
  const double md = median3(dyn), mm = median3(muon), mf = median3(fixed);
  const double sd = median3(dyn_stt), sm = median3(muon_stt);
  Outcome o;
  o.pass = md <= mm && mm <= mf && sd < sm;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "median final eval: dynmuon %.4g <= muon %.4g <= fixed %.4g; median steps-to-target: %g < %g", md, mm,
                mf, sd, sm);
  o.detail = buf;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome a10_determinism() {
  const fs::path root = fs::temp_directory_path() / "specshape_acceptance_a10";
  fs::remove_all(root);
  const std::vector<std::string> configs{
      "task.kind = quadratic\ntask.rows = 16\ntask.cols = 24\ntask.noise_std = 0.05\noptimizer.kind = dynmuon\n"
      "run.total_steps = 200\nrun.eval_stride = 20\nrun.seed = 11\n",
      "task.kind = mlp\ntask.dim = 8\ntask.hidden = 16\ntask.classes = 4\ntask.eval_samples = 512\n"
      "optimizer.kind = dynmuon\nrun.total_steps = 100\nrun.eval_stride = 10\nrun.seed = 12\n",
      "task.kind = mlp\ntask.dim = 8\ntask.hidden = 16\ntask.classes = 4\ntask.eval_samples = 512\n"
      "optimizer.kind = adamw\nrun.total_steps = 100\nrun.eval_stride = 10\nrun.seed = 13\n",
  };
  Outcome o;
  std::size_t compared = 0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const RunConfig cfg = parse_config_text(configs[k]);
    const fs::path a = root / (std::to_string(k) + "a"), b = root / (std::to_string(k) + "b"),
                   probed = root / (std::to_string(k) + "p");
    run_train(cfg, {a, 0});
    run_train(cfg, {b, 0});
    run_train(cfg, {probed, 20});
    const std::string ma = slurp(a / "metrics.csv");
    if (ma.empty() || ma != slurp(b / "metrics.csv")) {
      o.pass = false;
      o.detail += "repeat differs for config " + std::to_string(k) + "; ";
    }
    if (ma != slurp(probed / "metrics.csv") || !fs::exists(probed / "probes.csv")) {
      o.pass = false;
      o.detail += "probes changed metrics for config " + std::to_string(k) + "; ";
    }
    compared += 2;
  }
  fs::remove_all(root);
  if (o.pass) o.detail = std::to_string(compared) + " metrics.csv pairs byte-identical";
  return o;
}

struct Criterion {
  const char* id;
  const char* name;
  double time_limit_s;  // 0: none stated
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"A1", "exact shaping", 10.0, a1_exact_shaping},
      {"A2", "fast-spectral oracle", 10.0, a2_fast_spectral},
      {"A3", "Monte Carlo moments", 60.0, a3_monte_carlo},
      {"A4", "p=-1 equalization", 0.0, a4_equalization},
      {"A5", "optimal exponent sweep", 30.0, a5_exponent_sweep},
      {"A6", "residual shift", 0.0, a6_residual_shift},
      {"A7", "probe fidelity", 60.0, a7_probes},
      {"A8", "gradient checks", 0.0, a8_gradients},
      {"A9", "end-to-end ordering", 300.0, a9_end_to_end},
      {"A10", "determinism", 0.0, a10_determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0.0 && seconds > c.time_limit_s) {
      o.pass = false;
      o.detail += "; over time limit";
    }
    if (!o.pass) ++failures;
    std::printf("%-3s %s  %-24s %7.2f s  %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, seconds, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

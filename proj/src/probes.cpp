#include "specshape/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "specshape/error.hpp"
#include "specshape/kernels.hpp"
#include "specshape/linalg.hpp"

namespace specshape {
namespace {

void require_finite_value(double v, const char* what) {
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " is not finite");
}

void check_mode_shape(const EmpiricalMode& mode, const Matrix& x) {
  if (mode.left.size() != x.rows() || mode.right.size() != x.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "mode does not match the matrix shape");
  }
}

struct DifferenceQuotient {
  double value;
  double gradient_scale;
};

DifferenceQuotient central_difference(const GradientFn& grad, const Matrix& w, const EmpiricalMode& mode,
                                      const Matrix& b, double eps) {
  Matrix plus = w;
  add_scaled(plus, eps, b);
  Matrix minus = w;
  add_scaled(minus, -eps, b);
  const Matrix gp = grad(plus);
  const Matrix gm = grad(minus);
  if (!gp.same_shape(w) || !gm.same_shape(w)) throw Error(ErrorKind::ShapeMismatch, "gradient shape differs from W");
  require_finite(gp, "gradient at W + eps*B");
  require_finite(gm, "gradient at W - eps*B");
  const double value = (mode.project(gp) - mode.project(gm)) / (2.0 * eps);
  require_finite_value(value, "HVP estimate");
  return {value, std::max(frobenius_norm(gp), frobenius_norm(gm))};
}

}  // namespace

Matrix EmpiricalMode::outer() const {
  Matrix b(left.size(), right.size());
  for (std::size_t i = 0; i < left.size(); ++i) {
    kernels::axpy(left[i], right, b.row(i));
  }
  return b;
}

double EmpiricalMode::project(const Matrix& x) const {
  check_mode_shape(*this, x);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) sum += left[i] * kernels::dot(x.row(i), right);
  return sum;
}

std::size_t default_mode_count(std::size_t rows, std::size_t cols) noexcept {
  return std::min(kDefaultProbeModes, std::min(rows, cols));
}

std::vector<EmpiricalMode> extract_modes(const Matrix& update, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::InvalidParams, "k must be positive");
  if (k > std::min(update.rows(), update.cols())) {
    throw Error(ErrorKind::KTooLarge, "k exceeds min(rows, cols)");
  }
  const SvdResult s = svd(update);
  std::vector<EmpiricalMode> modes(k);
  for (std::size_t i = 0; i < k; ++i) {
    modes[i].left = s.u.column(i);
    modes[i].right.assign(s.vt.row(i).begin(), s.vt.row(i).end());
    modes[i].rank_index = i;
    modes[i].singular_value = s.singular_values[i];
  }
  return modes;
}

double default_hvp_epsilon(const Matrix& w) {
  const double mn = static_cast<double>(w.rows() * w.cols());
  return 1e-3 * (1.0 + frobenius_norm(w) / std::sqrt(mn));
}

HvpEstimate hvp_estimate(const GradientFn& grad, const Matrix& w, const EmpiricalMode& mode,
                         std::optional<double> epsilon) {
  check_mode_shape(mode, w);
  require_finite(w, "W");
  const double eps = epsilon ? *epsilon : default_hvp_epsilon(w);
  if (!(std::isfinite(eps) && eps > 0.0)) throw Error(ErrorKind::InvalidParams, "epsilon must be positive");
  const Matrix b = mode.outer();

  const DifferenceQuotient one = central_difference(grad, w, mode, b, eps);
  const DifferenceQuotient two = central_difference(grad, w, mode, b, 2.0 * eps);

  HvpEstimate est;
  est.value = one.value;
  est.epsilon = eps;
  constexpr double u = std::numeric_limits<double>::epsilon();
  est.roundoff_bound = u * (one.gradient_scale + std::abs(one.value) * (max_abs(w) + eps)) / eps;
  est.two_epsilon_gap = std::abs(one.value - two.value);

  const double tol = 1e-6 * std::max(1.0, std::abs(one.value));
  const bool noisy_gap = est.two_epsilon_gap > tol && est.roundoff_bound > 1e-2 * tol;
  if (est.roundoff_bound > tol || noisy_gap) {
    throw Error(ErrorKind::EpsilonTooSmall, "HVP difference quotient is dominated by round-off; increase epsilon");
  }
  return est;
}

double hvp_curvature(const GradientFn& grad, const Matrix& w, const EmpiricalMode& mode,
                     std::optional<double> epsilon) {
  return hvp_estimate(grad, w, mode, epsilon).value;
}

double sample_variance(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorKind::TooFewBatches, "need at least two batches");
  double mean = 0.0;
  for (double v : values) {
    require_finite_value(v, "projection");
    mean += v;
  }
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(values.size() - 1);
}

double noise_variance(std::span<const Matrix> batch_gradients, const EmpiricalMode& mode) {
  if (batch_gradients.size() < 2) throw Error(ErrorKind::TooFewBatches, "need at least two batches");
  std::vector<double> proj;
  proj.reserve(batch_gradients.size());
  for (const Matrix& g : batch_gradients) proj.push_back(mode.project(g));
  return sample_variance(proj);
}

double residual_energy(double g_probe, double h_hat) {
  require_finite_value(g_probe, "probe projection");
  require_finite_value(h_hat, "curvature estimate");
  if (h_hat < kCurvatureFloor) throw Error(ErrorKind::CurvatureBelowFloor, "curvature estimate below floor");
  return (g_probe * g_probe) / (h_hat * h_hat);
}

PowerLawFit fit_power_law(std::span<const double> curvatures, std::span<const double> noises) {
  if (curvatures.size() != noises.size()) throw Error(ErrorKind::ShapeMismatch, "curvature and noise lengths differ");
  const std::size_t n = curvatures.size();
  if (n < 3) throw Error(ErrorKind::TooFewModes, "power-law fit needs at least 3 points");
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    require_finite_value(curvatures[i], "curvature");
    require_finite_value(noises[i], "noise level");
    if (!(curvatures[i] > 0.0 && noises[i] > 0.0)) {
      throw Error(ErrorKind::NonPositiveInput, "power-law fit needs strictly positive inputs");
    }
    x[i] = std::log(curvatures[i]);
    y[i] = std::log(noises[i]);
  }
  const double dn = static_cast<double>(n);
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= dn;
  ym /= dn;
  const bool y_constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - xm;
    const double dy = y_constant ? 0.0 : y[i] - ym;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw Error(ErrorKind::DegenerateFit, "log-curvature has zero variance");
  if (y_constant) ym = y[0];

  PowerLawFit fit;
  fit.beta = sxy / sxx;
  const double intercept = ym - fit.beta * xm;
  fit.n_scale = std::exp(intercept);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (intercept + fit.beta * x[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 0.0;
  fit.beta_standard_error = n > 2 ? std::sqrt(ss_res / (dn - 2.0) / sxx) : 0.0;
  return fit;
}

ProbeReport probe_parameter(std::size_t step, const Matrix& w, const Matrix& direction_source,
                            const ProbeInputs& inputs, std::size_t k, std::size_t bucket_size) {
  ProbeReport report;
  report.step = step;
  const auto modes = extract_modes(direction_source, k);
  std::vector<double> h_ok, c_ok, d_ok;
  std::vector<double> h_fit, c_fit;
  for (const EmpiricalMode& mode : modes) {
    ModeProbe mp;
    mp.rank = mode.rank_index;
    mp.h_hat = hvp_curvature(inputs.gradient, w, mode);
    mp.c_hat = noise_variance(inputs.batch_gradients, mode);
    mp.g_probe = mode.project(inputs.probe_gradient);
    if (mp.h_hat >= kCurvatureFloor) {
      mp.delta2_hat = residual_energy(mp.g_probe, mp.h_hat);
      if (mp.c_hat > 0.0) {
        h_fit.push_back(mp.h_hat);
        c_fit.push_back(mp.c_hat);
        if (*mp.delta2_hat > 0.0) {
          h_ok.push_back(mp.h_hat);
          c_ok.push_back(mp.c_hat);
          d_ok.push_back(*mp.delta2_hat);
        }
      }
    }
    report.modes.push_back(mp);
  }
  if (bucket_size > 0 && h_ok.size() >= 2 * bucket_size) {
    report.metrics = signal_metrics(d_ok, c_ok, h_ok, bucket_size);
    std::vector<double> flat_u;
    for (std::size_t i : report.metrics->flat_bucket) flat_u.push_back(report.metrics->noise_adjusted[i]);
    report.u_flat_median = lower_median(std::move(flat_u));
  }
  if (h_fit.size() >= 3) {
    try {
      report.power_law = fit_power_law(h_fit, c_fit);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateFit) throw;
    }
  }
  return report;
}

}  // namespace specshape

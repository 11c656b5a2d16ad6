#include "specshape/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specshape/error.hpp"
#include "specshape/kernels.hpp"
#include "specshape/linalg.hpp"

namespace specshape {
namespace {

bool in_unit_interval(double h) { return std::isfinite(h) && h > 0.0 && h <= 1.0; }

Matrix symmetrized(const Matrix& a) {
  Matrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

}  // namespace

void validate(const QuadraticProblem& problem) {
  const Matrix& h = problem.h;
  if (h.empty() || h.rows() != h.cols()) throw Error(ErrorKind::ShapeMismatch, "H must be square");
  if (problem.w_star.rows() != h.rows()) throw Error(ErrorKind::ShapeMismatch, "W* rows must match H");
  require_finite(h, "H");
  require_finite(problem.w_star, "W*");
  if (!(std::isfinite(problem.kappa) && problem.kappa > 0.0)) {
    throw Error(ErrorKind::InvalidParams, "kappa must be positive");
  }
  if (!(std::isfinite(problem.noise_std) && problem.noise_std >= 0.0)) {
    throw Error(ErrorKind::InvalidParams, "noise_std must be >= 0");
  }
  const SymEigResult eig = sym_eig(h);
  if (std::abs(eig.eigenvalues.front() - 1.0) > 1e-8) {
    throw Error(ErrorKind::InvalidParams, "largest eigenvalue of H must be 1");
  }
  if (eig.eigenvalues.back() < -1e-8) throw Error(ErrorKind::InvalidParams, "H must be positive semidefinite");
}

double quadratic_loss(const QuadraticProblem& problem, const Matrix& w) {
  if (!w.same_shape(problem.w_star)) throw Error(ErrorKind::ShapeMismatch, "W shape differs from W*");
  const Matrix e = w - problem.w_star;
  return 0.5 * problem.kappa * frobenius_inner(matmul(problem.h, e), e);
}

LossGrad quadratic_loss_grad(const QuadraticProblem& problem, const Matrix& w, Rng* noise) {
  if (!w.same_shape(problem.w_star)) throw Error(ErrorKind::ShapeMismatch, "W shape differs from W*");
  const Matrix e = w - problem.w_star;
  LossGrad out;
  Matrix he = matmul(problem.h, e);
  out.loss = 0.5 * problem.kappa * frobenius_inner(he, e);
  he *= problem.kappa;
  if (problem.noise_std > 0.0) {
    if (noise == nullptr) throw Error(ErrorKind::SeedRequired, "noisy gradient needs a random stream");
    for (double& g : he.data()) g += problem.noise_std * noise->normal();
  }
  out.grad = std::move(he);
  return out;
}

void validate(const QuadraticSpectrumParams& params) {
  if (params.spectrum.empty()) {
    if (params.rows == 0) throw Error(ErrorKind::InvalidParams, "rows must be positive");
    if (!in_unit_interval(params.h_min)) throw Error(ErrorKind::InvalidParams, "h_min must lie in (0, 1]");
  } else {
    double top = 0.0;
    for (double h : params.spectrum) {
      if (!in_unit_interval(h)) throw Error(ErrorKind::InvalidParams, "spectrum values must lie in (0, 1]");
      top = std::max(top, h);
    }
    if (top != 1.0) throw Error(ErrorKind::InvalidParams, "spectrum maximum must be 1");
  }
  if (params.cols == 0) throw Error(ErrorKind::InvalidParams, "cols must be positive");
  if (!(std::isfinite(params.kappa) && params.kappa > 0.0)) throw Error(ErrorKind::InvalidParams, "kappa must be positive");
  if (!(std::isfinite(params.noise_std) && params.noise_std >= 0.0)) {
    throw Error(ErrorKind::InvalidParams, "noise_std must be >= 0");
  }
  if (!std::isfinite(params.signal_tilt)) throw Error(ErrorKind::InvalidParams, "signal_tilt must be finite");
  if (!(std::isfinite(params.signal_scale) && params.signal_scale > 0.0)) {
    throw Error(ErrorKind::InvalidParams, "signal_scale must be positive");
  }
}

std::vector<double> log_spaced_spectrum(std::size_t m, double h_min) {
  if (m == 0) throw Error(ErrorKind::InvalidParams, "spectrum size must be positive");
  if (!in_unit_interval(h_min)) throw Error(ErrorKind::InvalidParams, "h_min must lie in (0, 1]");
  std::vector<double> out(m, 1.0);
  if (m == 1 || h_min == 1.0) return out;
  const double log_min = std::log(h_min);
  for (std::size_t i = 1; i + 1 < m; ++i) {
    out[i] = std::exp(log_min * static_cast<double>(i) / static_cast<double>(m - 1));
  }
  out[m - 1] = h_min;
  return out;
}

QuadraticInstance make_quadratic(const QuadraticSpectrumParams& params, std::uint64_t seed) {
  validate(params);
  QuadraticInstance inst;
  inst.spectrum = params.spectrum.empty() ? log_spaced_spectrum(params.rows, params.h_min) : params.spectrum;
  const std::size_t m = inst.spectrum.size();
  const std::size_t n = params.cols;

  Rng q_rng = stream(seed, "task-basis");
  inst.eigenvectors = orthonormalize(q_rng.normal_matrix(m, m));
  const bool isotropic = std::all_of(inst.spectrum.begin(), inst.spectrum.end(), [](double h) { return h == 1.0; });
  if (isotropic) {
    inst.problem.h = Matrix::identity(m);
  } else {
    Matrix scaled = inst.eigenvectors;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) scaled(i, j) *= inst.spectrum[j];
    }
    inst.problem.h = symmetrized(matmul_transposed(scaled, inst.eigenvectors));
  }
  inst.problem.kappa = params.kappa;
  inst.problem.noise_std = params.noise_std;

  Rng star_rng = stream(seed, "task-optimum");
  inst.problem.w_star = star_rng.normal_matrix(m, n);

  Rng signal_rng = stream(seed, "task-signal");
  Matrix coeffs = signal_rng.normal_matrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    kernels::scale(std::pow(inst.spectrum[i], -params.signal_tilt), coeffs.row(i));
  }
  Matrix residual = matmul(inst.eigenvectors, coeffs);
  const double target = params.signal_scale * std::sqrt(static_cast<double>(m * n));
  residual *= target / frobenius_norm(residual);
  inst.w0 = inst.problem.w_star + residual;
  return inst;
}

void validate(const ClusterParams& params) {
  if (params.dim == 0) throw Error(ErrorKind::InvalidParams, "dim must be positive");
  if (params.classes < 2) throw Error(ErrorKind::InvalidParams, "need at least two classes");
  if (!(std::isfinite(params.margin) && params.margin >= 0.0)) throw Error(ErrorKind::InvalidParams, "margin must be >= 0");
  if (!(std::isfinite(params.noise_std) && params.noise_std > 0.0)) {
    throw Error(ErrorKind::InvalidParams, "cluster noise_std must be positive");
  }
}

ClusterData::ClusterData(const ClusterParams& params, std::uint64_t seed) : params_(params) {
  validate(params);
  Rng rng = stream(seed, "cluster-centers");
  centers_ = Matrix(params.classes, params.dim);
  if (params.classes <= params.dim) {
    // Orthogonal directions keep every pair of classes equally separated.
    const Matrix q = orthonormalize(rng.normal_matrix(params.dim, params.dim));
    for (std::size_t c = 0; c < params.classes; ++c) {
      for (std::size_t d = 0; d < params.dim; ++d) centers_(c, d) = params.margin * q(d, c);
    }
  } else {
    for (std::size_t c = 0; c < params.classes; ++c) {
      auto row = centers_.row(c);
      rng.fill_normal(row);
      const double norm = std::sqrt(kernels::sum_squares(row));
      kernels::scale(params.margin / norm, row);
    }
  }
}

Batch ClusterData::sample(std::size_t n, Rng& rng) const {
  Batch b;
  b.x = Matrix(n, params_.dim);
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = rng.below(params_.classes);
    b.labels[i] = label;
    auto row = b.x.row(i);
    rng.fill_normal(row, params_.noise_std);
    kernels::axpy(1.0, centers_.row(label), row);
  }
  return b;
}

void validate(const LossSpec& spec) {
  if (!(spec.lambda >= 0.0 && spec.lambda <= 1.0)) throw Error(ErrorKind::InvalidParams, "lambda must lie in [0, 1]");
}

MlpModel MlpModel::init(std::size_t dim, std::size_t hidden, std::size_t classes, Rng& rng) {
  if (dim == 0 || hidden == 0 || classes < 2) throw Error(ErrorKind::InvalidParams, "invalid MLP dimensions");
  MlpModel m;
  m.w1 = rng.normal_matrix(dim, hidden, 1.0 / std::sqrt(static_cast<double>(dim)));
  m.w2 = rng.normal_matrix(hidden, classes, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return m;
}

namespace {

void check_batch(const MlpModel& model, const Batch& batch) {
  if (model.w1.rows() != batch.x.cols() || model.w1.cols() != model.w2.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "MLP layer shapes do not match the batch");
  }
  if (batch.x.rows() == 0 || batch.labels.size() != batch.x.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "batch inputs and labels differ in length");
  }
  require_finite(batch.x, "batch inputs");
  for (std::size_t y : batch.labels) {
    if (y >= model.w2.cols()) throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " out of range");
  }
}

struct Forward {
  Matrix pre;     // X W1
  Matrix act;     // relu(pre)^2
  Matrix logits;  // act W2
};

Forward forward(const MlpModel& model, const Matrix& x) {
  Forward f;
  f.pre = matmul(x, model.w1);
  f.act = f.pre;
  for (double& v : f.act.data()) v = v > 0.0 ? v * v : 0.0;
  f.logits = matmul(f.act, model.w2);
  return f;
}

// Per-sample loss; fills dlogits (unscaled) when non-null.
double sample_loss(std::span<const double> z, std::size_t label, double lambda, std::span<double> dz) {
  const std::size_t c = z.size();
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> prob(c);
  double sum = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    prob[j] = std::exp(z[j] - zmax);
    sum += prob[j];
  }
  for (double& p : prob) p /= sum;
  const double ce = -(z[label] - zmax - std::log(sum));
  double brier = 0.0;
  double weighted = 0.0;  // sum_k p_k (p_k - y_k)
  for (std::size_t j = 0; j < c; ++j) {
    const double r = prob[j] - (j == label ? 1.0 : 0.0);
    brier += r * r;
    weighted += prob[j] * r;
  }
  if (!dz.empty()) {
    for (std::size_t j = 0; j < c; ++j) {
      const double r = prob[j] - (j == label ? 1.0 : 0.0);
      const double g_brier = 2.0 * prob[j] * r - 2.0 * prob[j] * weighted;
      dz[j] = (1.0 - lambda) * r + lambda * g_brier;
    }
  }
  return (1.0 - lambda) * ce + lambda * brier;
}

}  // namespace

Matrix mlp_logits(const MlpModel& model, const Matrix& x) {
  if (model.w1.rows() != x.cols()) throw Error(ErrorKind::ShapeMismatch, "input width differs from W1 rows");
  return forward(model, x).logits;
}

double mlp_loss(const MlpModel& model, const Batch& batch, const LossSpec& spec) {
  validate(spec);
  check_batch(model, batch);
  const Matrix logits = forward(model, batch.x).logits;
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) total += sample_loss(logits.row(i), batch.labels[i], spec.lambda, {});
  const double loss = total / static_cast<double>(logits.rows());
  if (!std::isfinite(loss)) throw Error(ErrorKind::NonFinite, "MLP loss is not finite");
  return loss;
}

MlpLossGrad mlp_forward_backward(const MlpModel& model, const Batch& batch, const LossSpec& spec) {
  validate(spec);
  check_batch(model, batch);
  const Forward f = forward(model, batch.x);
  const std::size_t n = batch.x.rows();
  const double inv_n = 1.0 / static_cast<double>(n);

  Matrix dlogits(n, f.logits.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += sample_loss(f.logits.row(i), batch.labels[i], spec.lambda, dlogits.row(i));
  }
  dlogits *= inv_n;

  MlpLossGrad out;
  out.loss = total * inv_n;
  out.grad_w2 = transposed_matmul(f.act, dlogits);
  Matrix dpre = matmul_transposed(dlogits, model.w2);
  auto pre = f.pre.data();
  auto d = dpre.data();
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = pre[k] > 0.0 ? d[k] * 2.0 * pre[k] : 0.0;
  out.grad_w1 = transposed_matmul(batch.x, dpre);
  if (!std::isfinite(out.loss)) throw Error(ErrorKind::NonFinite, "MLP loss is not finite");
  require_finite(out.grad_w1, "W1 gradient");
  require_finite(out.grad_w2, "W2 gradient");
  return out;
}

double accuracy(const Matrix& logits, std::span<const std::size_t> labels) {
  if (logits.rows() != labels.size() || labels.empty()) throw Error(ErrorKind::ShapeMismatch, "labels differ from logits");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace specshape

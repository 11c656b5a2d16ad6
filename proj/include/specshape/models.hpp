#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "specshape/matrix.hpp"
#include "specshape/rng.hpp"

namespace specshape {

// ---------------------------------------------------------------------------
// Quadratic matrix problem
// ---------------------------------------------------------------------------

/// L(W) = 1/2 kappa <H (W - W*), W - W*>, curvature acting on the left.
struct QuadraticProblem {
  Matrix h;  // m x m, symmetric PSD, largest eigenvalue 1
  double kappa = 1.0;
  Matrix w_star;  // m x n
  double noise_std = 0.0;
};

/// Checks symmetry and the unit top eigenvalue (to 1e-8).
void validate(const QuadraticProblem& problem);

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

double quadratic_loss(const QuadraticProblem& problem, const Matrix& w);

/// grad = kappa H (W - W*) + Xi with Xi i.i.d. N(0, noise_std^2). `noise`
/// is required when noise_std > 0 (SeedRequired otherwise).
LossGrad quadratic_loss_grad(const QuadraticProblem& problem, const Matrix& w, Rng* noise = nullptr);

struct QuadraticSpectrumParams {
  std::size_t rows = 32;
  std::size_t cols = 64;
  double h_min = 1e-3;
  // Explicit spectrum; overrides rows/h_min when non-empty.
  std::vector<double> spectrum;
  double kappa = 1.0;
  double noise_std = 0.0;
  // Initial residual W0 - W* along eigenvector i has RMS scale h_i^(-tilt),
  // normalized so |W0 - W*|_F = signal_scale * sqrt(rows * cols).
  double signal_tilt = 0.0;
  double signal_scale = 1.0;
};

void validate(const QuadraticSpectrumParams& params);

/// Log-spaced spectrum 1 = h_0 > ... > h_{m-1} = h_min.
std::vector<double> log_spaced_spectrum(std::size_t m, double h_min);

struct QuadraticInstance {
  QuadraticProblem problem;
  Matrix eigenvectors;            // Q, columns in spectrum order
  std::vector<double> spectrum;   // H = Q diag(spectrum) Q^T
  Matrix w0;                      // starting point
};

QuadraticInstance make_quadratic(const QuadraticSpectrumParams& params, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Gaussian clusters
// ---------------------------------------------------------------------------

struct ClusterParams {
  std::size_t dim = 16;
  std::size_t classes = 4;
  double margin = 3.0;  // distance of each class centre from the origin
  double noise_std = 1.0;
};

void validate(const ClusterParams& params);

struct Batch {
  Matrix x;  // n x dim
  std::vector<std::size_t> labels;
};

class ClusterData {
 public:
  ClusterData(const ClusterParams& params, std::uint64_t seed);

  const ClusterParams& params() const noexcept { return params_; }
  const Matrix& centers() const noexcept { return centers_; }

  /// Labels uniform over classes; x = centre + N(0, noise_std^2 I).
  Batch sample(std::size_t n, Rng& rng) const;

 private:
  ClusterParams params_;
  Matrix centers_;  // classes x dim
};

// ---------------------------------------------------------------------------
// Two-layer squared-ReLU MLP with the CE-Brier loss family
// ---------------------------------------------------------------------------

/// L = (1 - lambda) CE + lambda Brier, Brier = sum_j (yhat_j - y_j)^2.
struct LossSpec {
  double lambda = 0.0;
};

void validate(const LossSpec& spec);

/// logits = relu(X W1)^2 W2, no biases.
struct MlpModel {
  Matrix w1;  // dim x hidden
  Matrix w2;  // hidden x classes

  static MlpModel init(std::size_t dim, std::size_t hidden, std::size_t classes, Rng& rng);
};

struct MlpLossGrad {
  double loss = 0.0;
  Matrix grad_w1;
  Matrix grad_w2;
};

/// Mean loss over the batch and its exact gradients.
MlpLossGrad mlp_forward_backward(const MlpModel& model, const Batch& batch, const LossSpec& spec);

double mlp_loss(const MlpModel& model, const Batch& batch, const LossSpec& spec);

Matrix mlp_logits(const MlpModel& model, const Matrix& x);

double accuracy(const Matrix& logits, std::span<const std::size_t> labels);

}  // namespace specshape

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "specshape/matrix.hpp"
#include "specshape/mode_model.hpp"

namespace specshape {

/// Rank-one direction B = u v^T with unit u and v.
struct EmpiricalMode {
  std::vector<double> left;
  std::vector<double> right;
  std::size_t rank_index = 0;
  double singular_value = 0.0;

  Matrix outer() const;
  /// <B, X> = u^T X v.
  double project(const Matrix& x) const;
};

inline constexpr std::size_t kDefaultProbeModes = 256;

std::size_t default_mode_count(std::size_t rows, std::size_t cols) noexcept;

/// Top-k singular direction pairs, descending. Throws KTooLarge when k
/// exceeds min(rows, cols), InvalidParams when k is 0.
std::vector<EmpiricalMode> extract_modes(const Matrix& update, std::size_t k);

/// Gradient of the loss with respect to one matrix parameter.
using GradientFn = std::function<Matrix(const Matrix&)>;

/// 1e-3 * (1 + |W|_F / sqrt(mn)).
double default_hvp_epsilon(const Matrix& w);

struct HvpEstimate {
  double value = 0.0;
  double epsilon = 0.0;
  double roundoff_bound = 0.0;    // a-priori cancellation error of the difference quotient
  double two_epsilon_gap = 0.0;   // |h(eps) - h(2 eps)|
};

/// <Hess L(W) B, B> by central differences of gradients at W +/- eps*B.
/// Throws EpsilonTooSmall when the estimate is dominated by round-off.
HvpEstimate hvp_estimate(const GradientFn& grad, const Matrix& w, const EmpiricalMode& mode,
                         std::optional<double> epsilon = std::nullopt);

double hvp_curvature(const GradientFn& grad, const Matrix& w, const EmpiricalMode& mode,
                     std::optional<double> epsilon = std::nullopt);

/// Unbiased sample variance (two-pass). Throws TooFewBatches below 2 values.
double sample_variance(std::span<const double> values);

/// Sample variance of <G_b, B> over the batch gradients.
double noise_variance(std::span<const Matrix> batch_gradients, const EmpiricalMode& mode);

inline constexpr double kCurvatureFloor = 1e-8;

/// g_probe^2 / h^2. h is the raw HVP value, so it carries kappa.
double residual_energy(double g_probe, double h_hat);

struct PowerLawFit {
  double beta = 0.0;
  double n_scale = 0.0;
  double r_squared = 0.0;
  double beta_standard_error = 0.0;
};

/// OLS of log c on log h. R^2 is reported as 0 when log c is constant.
PowerLawFit fit_power_law(std::span<const double> curvatures, std::span<const double> noises);

struct ModeProbe {
  std::size_t rank = 0;
  double h_hat = 0.0;
  double c_hat = 0.0;
  double g_probe = 0.0;
  // Absent when h_hat is below the curvature floor.
  std::optional<double> delta2_hat;
};

struct ProbeReport {
  std::size_t step = 0;
  std::vector<ModeProbe> modes;
  // Absent when fewer than 2*bucket_size modes have positive estimates.
  std::optional<SignalMetrics> metrics;
  // Absent when fewer than 3 usable modes or log h is constant.
  std::optional<PowerLawFit> power_law;
  // Lower median of u over the flat bucket.
  std::optional<double> u_flat_median;
};

struct ProbeInputs {
  GradientFn gradient;                  // deterministic, for the HVP
  std::vector<Matrix> batch_gradients;  // n_b mini-batch gradients at W
  Matrix probe_gradient;                // mean gradient over the fixed probe set
};

/// Extracts k modes from `direction_source` and estimates every per-mode
/// quantity plus the summary statistics.
ProbeReport probe_parameter(std::size_t step, const Matrix& w, const Matrix& direction_source,
                            const ProbeInputs& inputs, std::size_t k, std::size_t bucket_size = kDefaultBucketSize);

}  // namespace specshape

#pragma once

#include "specshape/matrix.hpp"

namespace specshape {

/// Odd quintic x -> a*x + b*x^3 + c*x^5 applied to singular values, `steps`
/// times. Defaults are the widely used Muon coefficients; they oscillate
/// around 1 instead of converging, so outputs land in roughly [0.7, 1.3].
struct NewtonSchulzConfig {
  double a = 3.4445;
  double b = -4.7750;
  double c = 2.0315;
  int steps = 5;

  /// Classical cubic Newton-Schulz, (3/2, -1/2, 0): converges to exactly 1
  /// for normalized singular values in (0, 1], at the cost of more steps.
  static NewtonSchulzConfig cubic(int steps);
};

/// Iterates of the scalar map on a 10^4-point grid over (0, 1] must stay
/// inside [-kNewtonSchulzBound, kNewtonSchulzBound].
inline constexpr double kNewtonSchulzBound = 2.0;

/// Throws InvalidConfig if steps < 1 or the scalar map escapes the bound.
void validate(const NewtonSchulzConfig& cfg);

/// U diag(sigma^p) V^T via the exact SVD. Zero singular values map to zero
/// for p >= 0; for p < 0 they are an error.
Matrix exact_spectral_shape(const Matrix& m, double p);

/// Muon orthogonalization: Frobenius-normalize, then run the polynomial
/// iteration on the Gram side of the shorter dimension.
Matrix newton_schulz(const Matrix& x, const NewtonSchulzConfig& cfg = {});

/// Fast fractional shaping for mildly negative p:
///   X_n = X / |X|_F,  Y = newton_schulz(X_n),  A = X_n X_n^T,  E = A - I,
///   C = I + (p/2) E + (p/2)(p/2 - 1)/2 E^2,  result = |X|_F^p C Y.
/// Accepts rank-deficient input (C is a polynomial, finite at 0).
Matrix fast_spectral(const Matrix& x, double p, const NewtonSchulzConfig& cfg = {});

struct ShapingReport {
  double exponent = 0.0;
  double frobenius_error_vs_exact = 0.0;  // relative to |exact|_F
  double max_singular_value_error = 0.0;  // absolute, over sorted spectra
};

/// Compares fast_spectral(x, p) with exact shaping of the normalized input
/// rescaled by |x|_F^p (the matrix the fast path approximates).
ShapingReport shaping_error(const Matrix& x, double p, const NewtonSchulzConfig& cfg = {});

}  // namespace specshape

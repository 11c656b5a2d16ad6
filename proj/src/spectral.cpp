#include "specshape/spectral.hpp"

#include <algorithm>
#include <cmath>

#include "specshape/error.hpp"
#include "specshape/linalg.hpp"

namespace specshape {
namespace {

void require_nonzero(const Matrix& x, const char* what, double& norm_out) {
  if (x.empty()) throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": empty matrix");
  require_finite(x, what);
  norm_out = frobenius_norm(x);
  if (norm_out == 0.0) throw Error(ErrorKind::ZeroMatrix, std::string(what) + ": zero matrix");
}

// The full grid scan lives in validate(), run once when a configuration is
// built; per-call checks stay cheap.
void require_steps(const NewtonSchulzConfig& cfg) {
  if (cfg.steps < 1) throw Error(ErrorKind::InvalidConfig, "newton-schulz: steps must be >= 1");
}

// Runs on a wide (rows <= cols) matrix that is already normalized.
Matrix newton_schulz_wide(Matrix x, const NewtonSchulzConfig& cfg) {
  for (int k = 0; k < cfg.steps; ++k) {
    const Matrix a = gram(x);
    Matrix b = cfg.b * a;
    add_scaled(b, cfg.c, matmul(a, a));
    Matrix next = matmul(b, x);
    add_scaled(next, cfg.a, x);
    x = std::move(next);
  }
  return x;
}

}  // namespace

NewtonSchulzConfig NewtonSchulzConfig::cubic(int steps) { return {1.5, -0.5, 0.0, steps}; }

void validate(const NewtonSchulzConfig& cfg) {
  if (cfg.steps < 1) throw Error(ErrorKind::InvalidConfig, "newton-schulz: steps must be >= 1");
  if (!std::isfinite(cfg.a) || !std::isfinite(cfg.b) || !std::isfinite(cfg.c)) {
    throw Error(ErrorKind::InvalidConfig, "newton-schulz: non-finite coefficient");
  }
  constexpr int kGrid = 10000;
  for (int i = 1; i <= kGrid; ++i) {
    double v = static_cast<double>(i) / kGrid;
    for (int k = 0; k < cfg.steps; ++k) {
      const double v2 = v * v;
      v = v * (cfg.a + v2 * (cfg.b + cfg.c * v2));
      if (!(std::abs(v) <= kNewtonSchulzBound)) {
        throw Error(ErrorKind::InvalidConfig, "newton-schulz: scalar map leaves the bounded interval");
      }
    }
  }
}

Matrix exact_spectral_shape(const Matrix& m, double p) {
  if (m.empty()) throw Error(ErrorKind::ShapeMismatch, "exact_spectral_shape: empty matrix");
  if (!std::isfinite(p)) throw Error(ErrorKind::NonFinite, "exact_spectral_shape: exponent");
  SvdResult f = svd(m);
  for (double& s : f.singular_values) {
    if (s == 0.0) {
      if (p < 0.0) {
        throw Error(ErrorKind::RankDeficientNegativePower,
                    "exact_spectral_shape: zero singular value with negative exponent");
      }
      continue;
    }
    s = p == 1.0 ? s : std::pow(s, p);
  }
  Matrix out = f.reconstruct();
  require_finite(out, "exact_spectral_shape");
  return out;
}

Matrix newton_schulz(const Matrix& x, const NewtonSchulzConfig& cfg) {
  double norm = 0.0;
  require_nonzero(x, "newton_schulz", norm);
  require_steps(cfg);
  const bool tall = x.rows() > x.cols();
  Matrix w = tall ? x.transpose() : x;
  w *= 1.0 / norm;
  Matrix y = newton_schulz_wide(std::move(w), cfg);
  require_finite(y, "newton_schulz");
  return tall ? y.transpose() : y;
}

Matrix fast_spectral(const Matrix& x, double p, const NewtonSchulzConfig& cfg) {
  double norm = 0.0;
  require_nonzero(x, "fast_spectral", norm);
  if (!std::isfinite(p)) throw Error(ErrorKind::NonFinite, "fast_spectral: exponent");
  require_steps(cfg);
  const bool tall = x.rows() > x.cols();
  Matrix xn = tall ? x.transpose() : x;
  xn *= 1.0 / norm;

  const Matrix y = newton_schulz_wide(xn, cfg);

  const double delta = 0.5 * p;
  Matrix e = gram(xn);
  for (std::size_t i = 0; i < e.rows(); ++i) e(i, i) -= 1.0;
  Matrix c = Matrix::identity(e.rows());
  add_scaled(c, delta, e);
  add_scaled(c, 0.5 * delta * (delta - 1.0), matmul(e, e));

  Matrix out = matmul(c, y);
  out *= std::pow(norm, p);
  require_finite(out, "fast_spectral");
  return tall ? out.transpose() : out;
}

ShapingReport shaping_error(const Matrix& x, double p, const NewtonSchulzConfig& cfg) {
  const Matrix fast = fast_spectral(x, p, cfg);
  const double norm = frobenius_norm(x);
  Matrix exact = exact_spectral_shape((1.0 / norm) * x, p);
  exact *= std::pow(norm, p);

  ShapingReport rep;
  rep.exponent = p;
  rep.frobenius_error_vs_exact = frobenius_norm(fast - exact) / frobenius_norm(exact);
  const auto sf = svd(fast).singular_values;
  const auto se = svd(exact).singular_values;
  for (std::size_t i = 0; i < sf.size(); ++i) {
    rep.max_singular_value_error = std::max(rep.max_singular_value_error, std::abs(sf[i] - se[i]));
  }
  return rep;
}

}  // namespace specshape

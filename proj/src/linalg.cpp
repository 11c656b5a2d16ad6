#include "specshape/linalg.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <numeric>
#include <string>

#include "specshape/error.hpp"
#include "specshape/kernels.hpp"

namespace specshape {
namespace {

// Flip column i of `cols_owner` (stored as rows of `rows_t`) and the paired
// row of `partner` so the largest-magnitude entry is positive.
void fix_sign(std::span<double> vec, std::span<double> partner) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < vec.size(); ++k) {
    if (std::abs(vec[k]) > std::abs(vec[best])) best = k;
  }
  if (vec[best] < 0.0) {
    kernels::scale(-1.0, vec);
    if (!partner.empty()) kernels::scale(-1.0, partner);
  }
}

// Orthonormal completion: replace each row listed in `missing` with the first
// canonical basis vector that survives two passes of Gram-Schmidt against all
// rows already accepted.
void complete_rows(Matrix& rows, const std::vector<bool>& valid) {
  const std::size_t n = rows.cols();
  std::vector<std::size_t> accepted;
  for (std::size_t i = 0; i < rows.rows(); ++i)
    if (valid[i]) accepted.push_back(i);
  std::size_t next_basis = 0;
  std::vector<double> v(n);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    if (valid[i]) continue;
    for (; next_basis < n; ++next_basis) {
      std::fill(v.begin(), v.end(), 0.0);
      v[next_basis] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t a : accepted) kernels::axpy(-kernels::dot(rows.row(a), v), rows.row(a), v);
      }
      const double nrm = std::sqrt(kernels::sum_squares(v));
      if (nrm > 0.5) {
        kernels::scale(1.0 / nrm, v);
        std::copy(v.begin(), v.end(), rows.row(i).begin());
        accepted.push_back(i);
        ++next_basis;
        break;
      }
    }
  }
}

// One-sided Jacobi on the rows of a wide (m <= n) matrix.
SvdResult svd_wide(const Matrix& x, const JacobiOptions& opts) {
  const std::size_t m = x.rows();
  const std::size_t n = x.cols();
  const double big = max_abs(x);

  Matrix w = x;
  if (big > 0.0) w *= 1.0 / big;
  Matrix r = Matrix::identity(m);  // r * x = w throughout

  bool converged = (m == 1);
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    double worst = 0.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        const double a = kernels::sum_squares(w.row(i));
        const double b = kernels::sum_squares(w.row(j));
        if (a == 0.0 || b == 0.0) continue;
        const double g = kernels::dot(w.row(i), w.row(j));
        const double ratio = std::abs(g) / std::sqrt(a * b);
        worst = std::max(worst, ratio);
        if (ratio <= DBL_EPSILON) continue;
        const double zeta = (b - a) / (2.0 * g);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        kernels::rotate(w.row(i), w.row(j), c, s);
        kernels::rotate(r.row(i), r.row(j), c, s);
      }
    }
    converged = worst <= opts.tolerance;
  }
  if (!converged) throw Error(ErrorKind::NoConvergence, "svd: Jacobi sweeps exhausted");

  std::vector<double> sigma(m);
  for (std::size_t i = 0; i < m; ++i) sigma[i] = std::sqrt(kernels::sum_squares(w.row(i)));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return sigma[p] > sigma[q]; });

  const double sigma_max = m ? sigma[order[0]] : 0.0;
  SvdResult out;
  out.u = Matrix(m, m);
  out.vt = Matrix(m, n);
  out.singular_values.resize(m);
  std::vector<bool> valid(m, false);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t src = order[k];
    const double s = sigma[src];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = r(src, i);
    if (s > kRankTolerance * sigma_max && s > 0.0) {
      out.singular_values[k] = s * big;
      auto dst = out.vt.row(k);
      std::copy(w.row(src).begin(), w.row(src).end(), dst.begin());
      kernels::scale(1.0 / s, dst);
      valid[k] = true;
    }
  }
  complete_rows(out.vt, valid);
  return out;
}

void apply_sign_convention(SvdResult& res) {
  Matrix ut = res.u.transpose();
  for (std::size_t k = 0; k < ut.rows(); ++k) fix_sign(ut.row(k), res.vt.row(k));
  res.u = ut.transpose();
}

}  // namespace

Matrix SvdResult::reconstruct() const {
  Matrix us = u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t k = 0; k < us.cols(); ++k) us(i, k) *= singular_values[k];
  return matmul(us, vt);
}

Matrix SymEigResult::reconstruct() const {
  Matrix ql = q;
  for (std::size_t i = 0; i < ql.rows(); ++i)
    for (std::size_t k = 0; k < ql.cols(); ++k) ql(i, k) *= eigenvalues[k];
  return matmul_transposed(ql, q);
}

SvdResult svd(const Matrix& x, const JacobiOptions& opts) {
  if (x.empty()) throw Error(ErrorKind::ShapeMismatch, "svd: empty matrix");
  require_finite(x, "svd");
  SvdResult res;
  if (x.rows() > x.cols()) {
    SvdResult t = svd_wide(x.transpose(), opts);
    res.u = t.vt.transpose();
    res.vt = t.u.transpose();
    res.singular_values = std::move(t.singular_values);
  } else {
    res = svd_wide(x, opts);
  }
  apply_sign_convention(res);
  return res;
}

SymEigResult sym_eig(const Matrix& s, const JacobiOptions& opts) {
  if (s.empty() || s.rows() != s.cols()) throw Error(ErrorKind::ShapeMismatch, "sym_eig: matrix must be square");
  require_finite(s, "sym_eig");
  const std::size_t n = s.rows();
  const double big = max_abs(s);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-10 * big) {
        throw Error(ErrorKind::NotSymmetric, "sym_eig: asymmetry exceeds 1e-10 relative");
      }

  Matrix a(n, n);
  if (big > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i)) / big;
  }
  Matrix qt = Matrix::identity(n);  // rows are eigenvectors
  const double total = std::sqrt(kernels::sum_squares(a.data()));

  auto off_mass = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) acc += a(i, j) * a(i, j);
    return std::sqrt(acc);
  };

  bool converged = total == 0.0 || off_mass() <= opts.tolerance * total;
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        kernels::rotate(a.row(p), a.row(q), c, sn);
        kernels::rotate(qt.row(p), qt.row(q), c, sn);
      }
    }
    converged = off_mass() <= opts.tolerance * total;
  }
  if (!converged) throw Error(ErrorKind::NoConvergence, "sym_eig: Jacobi sweeps exhausted");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymEigResult out;
  out.eigenvalues.resize(n);
  Matrix sorted(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = a(order[k], order[k]) * big;
    std::copy(qt.row(order[k]).begin(), qt.row(order[k]).end(), sorted.row(k).begin());
    fix_sign(sorted.row(k), {});
  }
  out.q = sorted.transpose();
  return out;
}

Matrix orthonormalize(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (a.empty() || m < n) throw Error(ErrorKind::ShapeMismatch, "orthonormalize: need rows >= cols");
  require_finite(a, "orthonormalize");

  // Householder vectors are stored as rows of `vs` (length m, zero above j).
  Matrix r = a.transpose();  // columns of a as rows, so each reflector works on contiguous data
  Matrix vs(n, m);
  std::vector<double> diag(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto col = r.row(j);
    double norm = 0.0;
    for (std::size_t i = j; i < m; ++i) norm += col[i] * col[i];
    norm = std::sqrt(norm);
    const double alpha = col[j] >= 0.0 ? -norm : norm;
    diag[j] = alpha;
    auto v = vs.row(j);
    for (std::size_t i = j; i < m; ++i) v[i] = col[i];
    v[j] -= alpha;
    const double vnorm = std::sqrt(kernels::sum_squares(v));
    if (vnorm == 0.0) continue;
    kernels::scale(1.0 / vnorm, v);
    for (std::size_t k = j; k < n; ++k) {
      auto ck = r.row(k);
      kernels::axpy(-2.0 * kernels::dot(v, ck), v, ck);
    }
  }
  // Q = H_0 ... H_{n-1} applied to the first n canonical vectors.
  Matrix qt(n, m);
  for (std::size_t k = 0; k < n; ++k) qt(k, k) = 1.0;
  for (std::size_t jj = n; jj-- > 0;) {
    auto v = vs.row(jj);
    for (std::size_t k = 0; k < n; ++k) {
      auto qk = qt.row(k);
      kernels::axpy(-2.0 * kernels::dot(v, qk), v, qk);
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    if (diag[k] < 0.0) kernels::scale(-1.0, qt.row(k));
  return qt.transpose();
}

}  // namespace specshape

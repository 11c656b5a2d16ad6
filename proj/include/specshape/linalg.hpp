#pragma once

#include <vector>

#include "specshape/matrix.hpp"

namespace specshape {

/// Thin SVD X = U diag(s) V^T with r = min(m, n).
struct SvdResult {
  Matrix u;                             // m x r, orthonormal columns
  std::vector<double> singular_values;  // length r, non-increasing, >= 0
  Matrix vt;                            // r x n, orthonormal rows

  Matrix reconstruct() const;
};

/// S = Q diag(lambda) Q^T for symmetric S.
struct SymEigResult {
  Matrix q;                         // orthogonal, eigenvectors in columns
  std::vector<double> eigenvalues;  // non-increasing

  Matrix reconstruct() const;
};

struct JacobiOptions {
  int max_sweeps = 100;
  double tolerance = 1e-12;  // relative off-diagonal mass at convergence
};

// Singular values below this fraction of sigma_max are reported as exactly 0.
inline constexpr double kRankTolerance = 1e-12;

/// One-sided (Hestenes) Jacobi SVD, run on the shorter side.
///
/// Sign convention: each left singular vector has its largest-magnitude
/// entry positive (first such entry on ties). Rank-deficient directions of V
/// are completed deterministically from the canonical basis.
SvdResult svd(const Matrix& x, const JacobiOptions& opts = {});

/// Cyclic two-sided Jacobi eigensolver. Input must be square and symmetric to
/// 1e-10 relative asymmetry. Eigenvectors follow the same sign convention as
/// svd().
SymEigResult sym_eig(const Matrix& s, const JacobiOptions& opts = {});

/// Thin orthonormal factor Q (m x n, m >= n) from Householder QR, with R's
/// diagonal made positive so the result is unique.
Matrix orthonormalize(const Matrix& a);

}  // namespace specshape

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>

#include "nonstat/core.hpp"

namespace nonstat {

/// Lower-triangular Cholesky factor of a symmetric positive
/// *semi*definite matrix. Pivots within `drop_tol` of zero are treated
/// as exactly zero and their column is dropped (rank-deficient input
/// factorizes exactly, e.g. v v^T). A pivot below -drop_tol means the
/// matrix is indefinite and nullopt is returned.
inline std::optional<Matrix> cholesky_semidefinite(const Matrix& a, double drop_tol) {
  const std::size_t n = a.rows();
  Matrix l(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d < -drop_tol) return std::nullopt;
    if (d <= drop_tol) {
      // Numerically zero pivot: column stays zero. Verify the residual
      // column is negligible too, otherwise the matrix is not PSD.
      for (std::size_t i = j + 1; i < n; ++i) {
        double r = a(i, j);
        for (std::size_t k = 0; k < j; ++k) r -= l(i, k) * l(j, k);
        if (std::fabs(r) > std::sqrt(drop_tol) * (1.0 + std::fabs(a(i, i))))
          return std::nullopt;
      }
      continue;
    }
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / root;
    }
  }
  return l;
}

/// Smallest pivot of the (unpivoted) LDL^T recursion; >= -tol certifies
/// positive semidefiniteness up to tol for symmetric input.
inline double min_ldlt_pivot(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n, 0.0);
  std::vector<double> d(n, 0.0);
  double min_pivot = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    double dj = a(j, j);
    for (std::size_t k = 0; k < j; ++k) dj -= l(j, k) * l(j, k) * d[k];
    d[j] = dj;
    min_pivot = std::min(min_pivot, dj);
    l(j, j) = 1.0;
    const bool degenerate = std::fabs(dj) < 1e-300;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k) * d[k];
      l(i, j) = degenerate ? 0.0 : s / dj;
    }
  }
  return min_pivot;
}

/// Solve A x = b given the lower Cholesky factor L (A = L L^T).
/// Zero pivots (dropped columns) map to zero solution components.
inline std::vector<double> cholesky_solve(const Matrix& l, const std::vector<double>& b) {
  const std::size_t n = l.rows();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (l(i, i) == 0.0) continue;
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  std::vector<double> x(n, 0.0);
  for (std::size_t ii = n; ii-- > 0;) {
    if (l(ii, ii) == 0.0) continue;
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

inline double max_abs_asymmetry(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      m = std::max(m, std::fabs(a(i, j) - a(j, i)));
  return m;
}

}  // namespace nonstat

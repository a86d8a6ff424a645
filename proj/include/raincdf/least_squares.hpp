#pragma once

// Dense least squares via Householder QR.
//
// Solves min_x ||A x - b||_2 for tall systems (rows >= cols). The
// factorization is rank-revealing enough for this use: a diagonal entry of
// R collapsing below 1e-12 of the largest marks the system rank-deficient.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "raincdf/common.hpp"

namespace raincdf {

inline std::vector<double> solve_least_squares(const Matrix& A, std::span<const double> b) {
  const std::size_t m = A.rows;
  const std::size_t n = A.cols;
  if (n == 0) throw DataError("least squares: empty system");
  if (m < n) {
    throw DataError("least squares: " + std::to_string(m) + " rows < " + std::to_string(n) +
                    " columns");
  }
  if (b.size() != m) {
    throw DataError("least squares: right-hand side has " + std::to_string(b.size()) +
                    " entries, expected " + std::to_string(m));
  }
  for (double v : A.data) {
    if (!std::isfinite(v)) throw DataError("least squares: non-finite matrix entry");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw DataError("least squares: non-finite right-hand side entry");
  }

  Matrix R = A;
  std::vector<double> y(b.begin(), b.end());
  std::vector<double> v(m);
  std::vector<double> diag(n, 0.0);

  for (std::size_t j = 0; j < n; ++j) {
    double norm_sq = 0.0;
    for (std::size_t i = j; i < m; ++i) norm_sq += R(i, j) * R(i, j);
    const double norm = std::sqrt(norm_sq);
    if (norm == 0.0) {
      diag[j] = 0.0;
      continue;
    }
    // Reflect column j onto alpha * e_j with the sign chosen against
    // R(j,j) to avoid cancellation.
    const double alpha = R(j, j) > 0.0 ? -norm : norm;
    double vtv = 0.0;
    v[j] = R(j, j) - alpha;
    vtv += v[j] * v[j];
    for (std::size_t i = j + 1; i < m; ++i) {
      v[i] = R(i, j);
      vtv += v[i] * v[i];
    }
    if (vtv > 0.0) {
      const double scale = 2.0 / vtv;
      for (std::size_t k = j + 1; k < n; ++k) {
        double dot = 0.0;
        for (std::size_t i = j; i < m; ++i) dot += v[i] * R(i, k);
        const double f = scale * dot;
        for (std::size_t i = j; i < m; ++i) R(i, k) -= f * v[i];
      }
      double dot = 0.0;
      for (std::size_t i = j; i < m; ++i) dot += v[i] * y[i];
      const double f = scale * dot;
      for (std::size_t i = j; i < m; ++i) y[i] -= f * v[i];
    }
    diag[j] = alpha;
    R(j, j) = alpha;
  }

  double max_diag = 0.0;
  for (double d : diag) max_diag = std::max(max_diag, std::abs(d));
  for (std::size_t j = 0; j < n; ++j) {
    if (std::abs(diag[j]) < 1e-12 * max_diag || diag[j] == 0.0) {
      throw NumericError("least squares: rank-deficient system (column " + std::to_string(j) +
                         ")");
    }
  }

  std::vector<double> x(n, 0.0);
  for (std::size_t jj = n; jj-- > 0;) {
    double sum = y[jj];
    for (std::size_t k = jj + 1; k < n; ++k) sum -= R(jj, k) * x[k];
    x[jj] = sum / diag[jj];
  }
  return x;
}

inline double residual_norm(const Matrix& A, std::span<const double> x,
                            std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < A.rows; ++i) {
    double r = -b[i];
    for (std::size_t j = 0; j < A.cols; ++j) r += A(i, j) * x[j];
    sum += r * r;
  }
  return std::sqrt(sum);
}

}  // namespace raincdf

#pragma once

#include <cstddef>
#include <vector>

#include "rsim/matrix.hpp"

namespace rsim {

// Thin SVD m = u * diag(s) * vt with k = min(rows, cols):
//   u: rows x k, orthonormal columns; s: k values, descending, >= 0;
//   vt: k x cols, orthonormal rows.
// Sign-canonicalized: the largest-magnitude entry of each u column is
// non-negative, so repeated runs agree exactly.
struct SvdResult {
  Matrix u;
  std::vector<double> s;
  Matrix vt;
};

// Thin QR m = q * r for rows >= cols: q rows x cols with orthonormal
// columns, r cols x cols upper triangular.
struct QrResult {
  Matrix q;
  Matrix r;
};

// Subtract each row's mean. Idempotent; shape unchanged.
Matrix center_rows(const Matrix& m);
ActivationMatrix center_rows(const ActivationMatrix& m);

// One-sided Jacobi SVD (with a Householder QR pre-reduction when the short
// side is much shorter than the long one). Throws NumericalError if the
// sweep cap is reached without convergence.
SvdResult svd(const Matrix& m);

QrResult householder_qr(const Matrix& m);

// Number of singular values above rel_tol * s[0]; 0 if s is empty or
// s[0] == 0. s must be sorted descending.
std::size_t effective_rank(const std::vector<double>& s, double rel_tol);

// c = a * b
Matrix matmul(const Matrix& a, const Matrix& b);
// c = a * b^T (both operands traversed along contiguous rows)
Matrix matmul_abt(const Matrix& a, const Matrix& b);

}  // namespace rsim

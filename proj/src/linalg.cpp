#include "rsim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsim/kernels.hpp"

namespace rsim {

namespace {

constexpr double kConvergeTol = 1e-14;  // relative off-diagonal threshold
constexpr double kNegligibleSv = 1e-14; // below this (rel. to s_max) a direction is noise
constexpr int kMaxSweeps = 60;

// One-sided Jacobi on the rows of w (p x n, p <= n): accumulate rotations j
// (p x p, starts as identity) so that j_final * w_original = w_final with
// mutually orthogonal rows. Row norms of w_final are the singular values.
void jacobi_orthogonalize_rows(Matrix& w, Matrix& j) {
  const std::size_t p = w.rows();
  const std::size_t n = w.cols();
  if (p < 2) return;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t a = 0; a + 1 < p; ++a) {
      for (std::size_t b = a + 1; b < p; ++b) {
        const double paa = kernels::dot(w.row(a), w.row(a), n);
        const double pbb = kernels::dot(w.row(b), w.row(b), n);
        const double pab = kernels::dot(w.row(a), w.row(b), n);
        if (std::abs(pab) <= kConvergeTol * std::sqrt(paa * pbb)) continue;
        // Rotation zeroing the off-diagonal of [[paa, pab], [pab, pbb]].
        const double tau = (pbb - paa) / (2.0 * pab);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        kernels::rotate(c, s, w.row(a), w.row(b), n);
        kernels::rotate(c, s, j.row(a), j.row(b), p);
        rotated = true;
      }
    }
    if (!rotated) return;
  }
  throw NumericalError("Jacobi SVD did not converge within the sweep cap");
}

// Replace near-zero rows of vt (k x n) with unit vectors orthonormal to all
// other rows, so the factor stays orthonormal for rank-deficient inputs.
// Rows are filled in index order; a filled row counts as fixed for later ones.
void complete_orthonormal_rows(Matrix& vt, std::vector<bool> needs_fill) {
  const std::size_t k = vt.rows();
  const std::size_t n = vt.cols();
  std::vector<double> v(n), best(n);
  for (std::size_t i = 0; i < k; ++i) {
    if (!needs_fill[i]) continue;
    // Orthogonalize each canonical basis vector against the fixed rows and
    // keep the candidate with the largest residual.
    double best_norm = -1.0;
    for (std::size_t cand = 0; cand < n; ++cand) {
      std::fill(v.begin(), v.end(), 0.0);
      v[cand] = 1.0;
      for (std::size_t r = 0; r < k; ++r) {
        if (needs_fill[r]) continue;
        const double proj = kernels::dot(v.data(), vt.row(r), n);
        kernels::axpy(-proj, vt.row(r), v.data(), n);
      }
      const double norm = std::sqrt(kernels::dot(v.data(), v.data(), n));
      if (norm > best_norm) {
        best_norm = norm;
        best = v;
      }
    }
    // Re-orthogonalize once more to scrub rounding, then normalize.
    for (std::size_t r = 0; r < k; ++r) {
      if (needs_fill[r]) continue;
      const double proj = kernels::dot(best.data(), vt.row(r), n);
      kernels::axpy(-proj, vt.row(r), best.data(), n);
    }
    const double norm = std::sqrt(kernels::dot(best.data(), best.data(), n));
    kernels::scale(1.0 / norm, best.data(), n);
    std::copy(best.begin(), best.end(), vt.row(i));
    needs_fill[i] = false;
  }
}

// SVD of a wide (p <= n) matrix via row orthogonalization.
SvdResult svd_wide(const Matrix& b) {
  const std::size_t p = b.rows();
  const std::size_t n = b.cols();

  Matrix w = b;
  Matrix j(p, p);
  for (std::size_t i = 0; i < p; ++i) j(i, i) = 1.0;
  jacobi_orthogonalize_rows(w, j);

  std::vector<double> norms(p);
  for (std::size_t i = 0; i < p; ++i) {
    norms[i] = std::sqrt(kernels::dot(w.row(i), w.row(i), n));
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  SvdResult out;
  out.s.resize(p);
  out.u = Matrix(p, p);
  out.vt = Matrix(p, n);
  const double s_max = norms[order[0]];
  std::vector<bool> needs_fill(p, false);
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t src = order[k];
    double sv = norms[src];
    if (sv <= kNegligibleSv * s_max || s_max == 0.0) {
      sv = 0.0;
      needs_fill[k] = true;
    } else {
      const double inv = 1.0 / norms[src];
      for (std::size_t col = 0; col < n; ++col) out.vt(k, col) = w(src, col) * inv;
    }
    out.s[k] = sv;
    // Row src of the accumulated rotation is the k-th left singular vector.
    for (std::size_t row = 0; row < p; ++row) out.u(row, k) = j(src, row);
  }
  complete_orthonormal_rows(out.vt, std::move(needs_fill));

  // Make the largest-magnitude entry of each u column positive.
  for (std::size_t k = 0; k < p; ++k) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t row = 0; row < p; ++row) {
      const double mag = std::abs(out.u(row, k));
      if (mag > best) {
        best = mag;
        arg = row;
      }
    }
    if (out.u(arg, k) < 0.0) {
      for (std::size_t row = 0; row < p; ++row) out.u(row, k) = -out.u(row, k);
      kernels::scale(-1.0, out.vt.row(k), n);
    }
  }
  return out;
}

}  // namespace

Matrix center_rows(const Matrix& m) {
  Matrix out = m;
  const std::size_t n = m.cols();
  if (n == 0) return out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double mean = kernels::sum(out.row(i), n) / static_cast<double>(n);
    double* row = out.row(i);
    for (std::size_t jcol = 0; jcol < n; ++jcol) row[jcol] -= mean;
  }
  return out;
}

ActivationMatrix center_rows(const ActivationMatrix& m) {
  ActivationMatrix out = m;
  out.values = center_rows(m.values);
  return out;
}

QrResult householder_qr(const Matrix& m) {
  const std::size_t n = m.rows();
  const std::size_t p = m.cols();
  if (n < p) throw ShapeError("householder_qr expects rows >= cols");

  // Work on the transpose so each column of m is a contiguous row.
  Matrix t = m.transposed();  // p x n
  std::vector<std::vector<double>> reflectors(p);
  std::vector<double> betas(p, 0.0);

  for (std::size_t k = 0; k < p; ++k) {
    double* x = t.row(k) + k;
    const std::size_t len = n - k;
    const double norm = std::sqrt(kernels::dot(x, x, len));
    std::vector<double> v(x, x + len);
    double beta = 0.0;
    if (norm > 0.0) {
      const double alpha = x[0] >= 0.0 ? -norm : norm;
      v[0] -= alpha;
      const double vsq = kernels::dot(v.data(), v.data(), len);
      if (vsq > 0.0) beta = 2.0 / vsq;
      x[0] = alpha;
      for (std::size_t idx = 1; idx < len; ++idx) x[idx] = 0.0;
    }
    for (std::size_t jrow = k + 1; jrow < p; ++jrow) {
      double* slice = t.row(jrow) + k;
      const double coef = beta * kernels::dot(v.data(), slice, len);
      kernels::axpy(-coef, v.data(), slice, len);
    }
    reflectors[k] = std::move(v);
    betas[k] = beta;
  }

  QrResult out;
  out.r = Matrix(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t jcol = i; jcol < p; ++jcol) out.r(i, jcol) = t(jcol, i);
  }

  // Back-accumulate thin Q: apply reflectors in reverse to the first p
  // columns of the identity. qt holds Q's columns as rows.
  Matrix qt(p, n);
  for (std::size_t i = 0; i < p; ++i) qt(i, i) = 1.0;
  for (std::size_t k = p; k-- > 0;) {
    const auto& v = reflectors[k];
    const double beta = betas[k];
    if (beta == 0.0) continue;
    const std::size_t len = n - k;
    for (std::size_t jrow = 0; jrow < p; ++jrow) {
      double* slice = qt.row(jrow) + k;
      const double coef = beta * kernels::dot(v.data(), slice, len);
      kernels::axpy(-coef, v.data(), slice, len);
    }
  }
  out.q = qt.transposed();
  return out;
}

SvdResult svd(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) throw ShapeError("svd of an empty matrix");
  if (!m.all_finite()) throw DataError("svd input contains non-finite values");

  if (m.rows() > m.cols()) {
    // Tall: factor the transpose and swap the roles of u and vt.
    SvdResult wide = svd(m.transposed());
    SvdResult out;
    out.s = std::move(wide.s);
    out.u = wide.vt.transposed();
    out.vt = wide.u.transposed();
    return out;
  }

  const std::size_t p = m.rows();
  const std::size_t n = m.cols();
  if (n > 3 * p && p > 1) {
    // Very wide: m^T = q r, so m = r^T q^T and only the p x p factor needs
    // the iterative solve.
    QrResult qr = householder_qr(m.transposed());
    SvdResult core = svd_wide(qr.r.transposed());
    SvdResult out;
    out.s = std::move(core.s);
    out.u = std::move(core.u);
    out.vt = matmul_abt(core.vt, qr.q);
    return out;
  }
  return svd_wide(m);
}

std::size_t effective_rank(const std::vector<double>& s, double rel_tol) {
  if (s.empty() || s.front() <= 0.0) return 0;
  const double cut = rel_tol * s.front();
  std::size_t count = 0;
  for (double v : s) {
    if (v > cut) ++count;
  }
  return count;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t l = 0; l < a.cols(); ++l) {
      kernels::axpy(a(i, l), b.row(l), c.row(i), b.cols());
    }
  }
  return c;
}

Matrix matmul_abt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_abt shape mismatch");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t jrow = 0; jrow < b.rows(); ++jrow) {
      c(i, jrow) = kernels::dot(a.row(i), b.row(jrow), a.cols());
    }
  }
  return c;
}

}  // namespace rsim

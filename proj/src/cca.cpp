#include "rsim/cca.hpp"

#include <algorithm>
#include <cmath>

#include "rsim/linalg.hpp"

namespace rsim {

namespace {

constexpr double kRhoSlack = 1e-8;  // rho above 1 + slack is a bug, not rounding

// First k rows of vt as an owned matrix.
Matrix top_rows(const Matrix& vt, std::size_t k) {
  Matrix out(k, vt.cols());
  for (std::size_t i = 0; i < k; ++i) {
    std::copy(vt.row(i), vt.row(i) + vt.cols(), out.row(i));
  }
  return out;
}

// Smallest k with sum of the first k squared singular values reaching
// keep * total mass.
std::size_t variance_rank(const std::vector<double>& s, double keep) {
  double total = 0.0;
  for (double v : s) total += v * v;
  if (total <= 0.0) return 0;
  double acc = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    acc += s[k] * s[k];
    if (acc >= keep * total) return k + 1;
  }
  return s.size();
}

CcaResult cca_impl(const ActivationMatrix& x, const ActivationMatrix& y,
                   double rel_tol, double variance_keep) {
  x.validate();
  y.validate();
  if (x.cols() != y.cols()) {
    throw ShapeError("views disagree on input count: " + std::to_string(x.cols()) +
                     " vs " + std::to_string(y.cols()));
  }
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) {
    throw DegenerateInputError("rel_tol must lie in (0, 1)");
  }
  const std::size_t n_inputs = x.cols();

  const Matrix xc = center_rows(x.values);
  const Matrix yc = center_rows(y.values);
  const SvdResult sx = svd(xc);
  const SvdResult sy = svd(yc);

  std::size_t kx = effective_rank(sx.s, rel_tol);
  std::size_t ky = effective_rank(sy.s, rel_tol);
  if (variance_keep > 0.0) {
    kx = std::min(kx, variance_rank(sx.s, variance_keep));
    ky = std::min(ky, variance_rank(sy.s, variance_keep));
  }
  if (kx == 0) throw DegenerateInputError("first view has rank 0 (all rows constant)");
  if (ky == 0) throw DegenerateInputError("second view has rank 0 (all rows constant)");

  const Matrix base_x = top_rows(sx.vt, kx);
  const Matrix base_y = top_rows(sy.vt, ky);

  // Cross-correlation of the whitened views; its singular values are the
  // canonical correlations.
  const Matrix cross = matmul_abt(base_x, base_y);
  const SvdResult sm = svd(cross);

  const std::size_t c = std::min(kx, ky);
  CcaResult out;
  out.kept_x = kx;
  out.kept_y = ky;
  out.rho.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    double r = sm.s[i];
    if (r > 1.0 + kRhoSlack) {
      throw NumericalError("canonical correlation " + std::to_string(r) +
                           " exceeds 1 beyond rounding slack");
    }
    out.rho[i] = std::clamp(r, 0.0, 1.0);
  }
  // sm.u is kx x c, sm.vt is c x ky.
  out.dirs_x = matmul(sm.u.transposed(), base_x);
  out.dirs_y = matmul(sm.vt, base_y);
  out.ill_conditioned = (kx + ky + 1 > n_inputs) ||
                        (std::max(x.rows(), y.rows()) >= n_inputs);
  return out;
}

}  // namespace

CcaResult cca(const ActivationMatrix& x, const ActivationMatrix& y, double rel_tol) {
  return cca_impl(x, y, rel_tol, 0.0);
}

CcaResult svcca(const ActivationMatrix& x, const ActivationMatrix& y,
                double variance_keep, double rel_tol) {
  if (!(variance_keep > 0.0 && variance_keep <= 1.0)) {
    throw DegenerateInputError("variance_keep must lie in (0, 1]");
  }
  return cca_impl(x, y, rel_tol, variance_keep);
}

double mean_cca_distance(const CcaResult& r) {
  if (r.rho.empty()) throw DegenerateInputError("no canonical correlations");
  double total = 0.0;
  for (double v : r.rho) total += v;
  return 1.0 - total / static_cast<double>(r.rho.size());
}

}  // namespace rsim

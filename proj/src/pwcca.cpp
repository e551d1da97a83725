#include "rsim/pwcca.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rsim/kernels.hpp"
#include "rsim/linalg.hpp"

namespace rsim {

namespace {

// Deterministic total order on matrices, used to make symmetric-mode
// results bit-identical regardless of argument order.
bool canonical_less(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  const int cmp = std::memcmp(a.data().data(), b.data().data(),
                              a.data().size() * sizeof(double));
  return cmp < 0;
}

double weighted_distance(const std::vector<double>& alpha, const std::vector<double>& rho) {
  double acc = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) acc += alpha[k] * rho[k];
  return 1.0 - acc;
}

}  // namespace

const char* to_string(CcaView view) {
  switch (view) {
    case CcaView::kFirst: return "first";
    case CcaView::kSecond: return "second";
    case CcaView::kSymmetric: return "symmetric";
  }
  return "?";
}

std::vector<double> projection_weights(const CcaResult& r, const ActivationMatrix& x,
                                       CcaView view) {
  if (view == CcaView::kSymmetric) {
    throw ShapeError("projection_weights needs a concrete view (first or second)");
  }
  const Matrix& dirs = view == CcaView::kFirst ? r.dirs_x : r.dirs_y;
  if (dirs.cols() != x.cols()) {
    throw ShapeError("canonical directions and activations disagree on input count");
  }
  const std::size_t expected_rows = view == CcaView::kFirst ? r.kept_x : r.kept_y;
  if (x.rows() < expected_rows) {
    throw ShapeError("activation matrix has fewer neurons than the view's kept rank");
  }
  const Matrix xc = center_rows(x.values);

  std::vector<double> alpha(dirs.rows(), 0.0);
  for (std::size_t i = 0; i < dirs.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < xc.rows(); ++k) {
      acc += std::abs(kernels::dot(dirs.row(i), xc.row(k), xc.cols()));
    }
    alpha[i] = acc;
  }
  const double total = kernels::sum(alpha.data(), alpha.size());
  if (!(total > 0.0)) {
    throw DegenerateInputError("projection weights sum to zero");
  }
  for (double& a : alpha) a /= total;
  return alpha;
}

PwccaDistance pwcca_distance(const ActivationMatrix& x, const ActivationMatrix& y,
                             CcaView mode, double rel_tol) {
  if (mode == CcaView::kSymmetric && canonical_less(y.values, x.values)) {
    PwccaDistance flipped = pwcca_distance(y, x, mode, rel_tol);
    return flipped;  // symmetric: same value, weights from the canonical order
  }

  const CcaResult r = cca(x, y, rel_tol);
  PwccaDistance out;
  out.view = mode;
  out.rho_used = r.rho;
  out.ill_conditioned = r.ill_conditioned;

  switch (mode) {
    case CcaView::kFirst:
      out.alpha = projection_weights(r, x, CcaView::kFirst);
      break;
    case CcaView::kSecond:
      out.alpha = projection_weights(r, y, CcaView::kSecond);
      break;
    case CcaView::kSymmetric: {
      const std::vector<double> a1 = projection_weights(r, x, CcaView::kFirst);
      const std::vector<double> a2 = projection_weights(r, y, CcaView::kSecond);
      out.alpha.resize(a1.size());
      for (std::size_t k = 0; k < a1.size(); ++k) out.alpha[k] = 0.5 * (a1[k] + a2[k]);
      break;
    }
  }

  double value = weighted_distance(out.alpha, out.rho_used);
  if (value < -1e-10 || value > 1.0 + 1e-10) {
    throw NumericalError("PWCCA distance " + std::to_string(value) + " out of [0, 1]");
  }
  out.value = std::clamp(value, 0.0, 1.0);
  return out;
}

}  // namespace rsim

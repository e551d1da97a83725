#pragma once

#include <cstddef>
#include <vector>

#include "rsim/matrix.hpp"

namespace rsim {

inline constexpr double kDefaultRelTol = 1e-6;
inline constexpr double kDefaultVarianceKeep = 0.99;

// Output of one canonical correlation run between two activation matrices.
//
// rho holds the canonical correlations, descending, each clamped to [0, 1].
// dirs_x / dirs_y hold the canonical variates of each view as c x N row
// matrices over the N probe inputs: row i of dirs_x and row i of dirs_y are
// unit-norm, zero-mean vectors whose correlation is rho[i].
struct CcaResult {
  std::vector<double> rho;
  Matrix dirs_x;
  Matrix dirs_y;
  std::size_t kept_x = 0;
  std::size_t kept_y = 0;
  // Set when the probe-input count cannot support the retained subspace
  // dimensions (kept_x + kept_y > N - 1, or a view has at least as many
  // neurons as inputs). Correlations are then inflated by dimension
  // counting rather than by shared structure, so downstream consumers
  // refuse such results unless explicitly overridden.
  bool ill_conditioned = false;

  std::size_t count() const { return rho.size(); }
};

// Canonical correlation between two views over the same probe inputs.
// Implementation: center rows, reduce each view to its significant
// principal row space (singular values above rel_tol * s_max), then take
// the singular values of the product of the two orthonormal row bases.
// Those are the cosines of the principal angles between the row spaces,
// which is exactly the set of canonical correlations of the whitened views.
CcaResult cca(const ActivationMatrix& x, const ActivationMatrix& y,
              double rel_tol = kDefaultRelTol);

// CCA after truncating each view to the smallest subspace holding at least
// variance_keep of its squared-singular-value mass.
CcaResult svcca(const ActivationMatrix& x, const ActivationMatrix& y,
                double variance_keep = kDefaultVarianceKeep,
                double rel_tol = kDefaultRelTol);

// 1 - mean(rho): the unweighted CCA distance.
double mean_cca_distance(const CcaResult& r);

}  // namespace rsim

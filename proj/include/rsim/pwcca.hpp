#pragma once

#include <vector>

#include "rsim/cca.hpp"
#include "rsim/matrix.hpp"

namespace rsim {

// Which view's neuron activations supply the projection weights. PWCCA is
// asymmetric by construction; symmetric averages the two one-view distances.
enum class CcaView { kFirst, kSecond, kSymmetric };

const char* to_string(CcaView view);

struct PwccaDistance {
  double value = 0.0;              // 1 - sum_k alpha[k] * rho[k]
  std::vector<double> alpha;       // non-negative, sums to 1
  std::vector<double> rho_used;
  CcaView view = CcaView::kSymmetric;
  bool ill_conditioned = false;
};

// Projection weights of Eq.-style form: weight i is the total absolute
// inner product between canonical variate i and the view's centered neuron
// rows, normalized to sum 1. Measures how much of the raw activation mass
// each canonical direction explains.
//
// x is the activation matrix of the chosen view (the one r was computed
// from); it is centered internally, which is idempotent.
std::vector<double> projection_weights(const CcaResult& r, const ActivationMatrix& x,
                                       CcaView view);

// Projection-weighted CCA distance between two views.
PwccaDistance pwcca_distance(const ActivationMatrix& x, const ActivationMatrix& y,
                             CcaView mode = CcaView::kSymmetric,
                             double rel_tol = kDefaultRelTol);

}  // namespace rsim

// NEON kernel variants for aarch64, where NEON is baseline.

#if defined(__aarch64__) || defined(__ARM_NEON)

#include <arm_neon.h>

#include "rsim/kernels.hpp"

namespace rsim::kernels {

namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(x + k), vld1q_f64(y + k));
  }
  double total = vaddvq_f64(acc);
  for (; k < n; ++k) total += x[k] * y[k];
  return total;
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    vst1q_f64(y + k, vfmaq_f64(vld1q_f64(y + k), va, vld1q_f64(x + k)));
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

void scale_neon(double a, double* x, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    vst1q_f64(x + k, vmulq_f64(va, vld1q_f64(x + k)));
  }
  for (; k < n; ++k) x[k] *= a;
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) acc = vaddq_f64(acc, vld1q_f64(x + k));
  double total = vaddvq_f64(acc);
  for (; k < n; ++k) total += x[k];
  return total;
}

void rotate_neon(double c, double s, double* x, double* y, std::size_t n) {
  const float64x2_t vc = vdupq_n_f64(c);
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    const float64x2_t vx = vld1q_f64(x + k);
    const float64x2_t vy = vld1q_f64(y + k);
    vst1q_f64(x + k, vfmsq_f64(vmulq_f64(vc, vx), vs, vy));
    vst1q_f64(y + k, vfmaq_f64(vmulq_f64(vc, vy), vs, vx));
  }
  for (; k < n; ++k) {
    const double xk = x[k];
    const double yk = y[k];
    x[k] = c * xk - s * yk;
    y[k] = s * xk + c * yk;
  }
}

}  // namespace

const Ops& neon_ops() {
  static const Ops ops{"neon", dot_neon, axpy_neon, scale_neon, sum_neon,
                       rotate_neon};
  return ops;
}

}  // namespace rsim::kernels

#endif  // aarch64 / NEON

#pragma once

#include <cstddef>

// Data-parallel inner loops behind the dense linear algebra. Scalar
// reference implementations always exist; AVX2 (x86-64) and NEON (aarch64)
// variants are selected once at runtime from CPU capabilities. Setting
// RSIM_FORCE_SCALAR=1 in the environment pins the scalar path.

namespace rsim::kernels {

struct Ops {
  const char* name;
  // sum_k x[k] * y[k]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[k] += a * x[k]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x[k] *= a
  void (*scale)(double a, double* x, std::size_t n);
  // sum_k x[k]
  double (*sum)(const double* x, std::size_t n);
  // Plane rotation of two rows: (x, y) <- (c*x - s*y, s*x + c*y).
  void (*rotate)(double c, double s, double* x, double* y, std::size_t n);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif
#if defined(__aarch64__) || defined(__ARM_NEON)
const Ops& neon_ops();
#endif

// The implementation chosen for this process.
const Ops& active();

inline double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}
inline void axpy(double a, const double* x, double* y, std::size_t n) {
  active().axpy(a, x, y, n);
}
inline void scale(double a, double* x, std::size_t n) { active().scale(a, x, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline void rotate(double c, double s, double* x, double* y, std::size_t n) {
  active().rotate(c, s, x, y, n);
}

}  // namespace rsim::kernels

#include "rsim/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace rsim::kernels {

namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += x[k] * y[k];
  return acc;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += a * x[k];
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) x[k] *= a;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += x[k];
  return acc;
}

void rotate_scalar(double c, double s, double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const double xk = x[k];
    const double yk = y[k];
    x[k] = c * xk - s * yk;
    y[k] = s * xk + c * yk;
  }
}

bool force_scalar() {
  const char* v = std::getenv("RSIM_FORCE_SCALAR");
  return v != nullptr && std::strcmp(v, "1") == 0;
}

const Ops& pick() {
  if (force_scalar()) return scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
#if defined(__GNUC__) || defined(__clang__)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return avx2_ops();
  }
#endif
#elif defined(__aarch64__)
  return neon_ops();
#endif
  return scalar_ops();
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops{"scalar", dot_scalar, axpy_scalar, scale_scalar,
                       sum_scalar, rotate_scalar};
  return ops;
}

const Ops& active() {
  static const Ops& chosen = pick();
  return chosen;
}

}  // namespace rsim::kernels

// AVX2 + FMA kernel variants. This translation unit is the only one built
// with -mavx2 -mfma; callers reach it through the runtime dispatch in
// kernels.cpp, which checks CPU support first.

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "rsim/kernels.hpp"

namespace rsim::kernels {

namespace {

double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k + 4), _mm256_loadu_pd(y + k + 4), acc1);
  }
  for (; k + 4 <= n; k += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + k), _mm256_loadu_pd(y + k), acc0);
  }
  double total = hsum(_mm256_add_pd(acc0, acc1));
  for (; k < n; ++k) total += x[k] * y[k];
  return total;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    __m256d vy = _mm256_loadu_pd(y + k);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + k), vy);
    _mm256_storeu_pd(y + k, vy);
  }
  for (; k < n; ++k) y[k] += a * x[k];
}

void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    _mm256_storeu_pd(x + k, _mm256_mul_pd(va, _mm256_loadu_pd(x + k)));
  }
  for (; k < n; ++k) x[k] *= a;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + k));
  double total = hsum(acc);
  for (; k < n; ++k) total += x[k];
  return total;
}

void rotate_avx2(double c, double s, double* x, double* y, std::size_t n) {
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d vx = _mm256_loadu_pd(x + k);
    const __m256d vy = _mm256_loadu_pd(y + k);
    _mm256_storeu_pd(x + k, _mm256_fmsub_pd(vc, vx, _mm256_mul_pd(vs, vy)));
    _mm256_storeu_pd(y + k, _mm256_fmadd_pd(vs, vx, _mm256_mul_pd(vc, vy)));
  }
  for (; k < n; ++k) {
    const double xk = x[k];
    const double yk = y[k];
    x[k] = c * xk - s * yk;
    y[k] = s * xk + c * yk;
  }
}

}  // namespace

const Ops& avx2_ops() {
  static const Ops ops{"avx2", dot_avx2, axpy_avx2, scale_avx2, sum_avx2,
                       rotate_avx2};
  return ops;
}

}  // namespace rsim::kernels

#endif  // x86-64

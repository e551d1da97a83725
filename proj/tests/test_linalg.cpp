#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "rsim/errors.hpp"
#include "rsim/linalg.hpp"

#include "helpers.hpp"
#include "oracle.hpp"

using namespace rsim;
using testutil::random_matrix;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      worst = std::max(worst, std::fabs(a(i, j) - b(i, j)));
    }
  }
  return worst;
}

Matrix reconstruct(const SvdResult& r) {
  Matrix us = r.u;
  for (std::size_t i = 0; i < us.rows(); ++i) {
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= r.s[j];
  }
  return matmul(us, r.vt);
}

void check_orthonormal_columns(const Matrix& m, double tol) {
  for (std::size_t a = 0; a < m.cols(); ++a) {
    for (std::size_t b = a; b < m.cols(); ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, a) * m(i, b);
      CHECK(std::fabs(acc - (a == b ? 1.0 : 0.0)) <= tol);
    }
  }
}

void check_svd_contract(const Matrix& m) {
  const SvdResult r = svd(m);
  const std::size_t k = std::min(m.rows(), m.cols());
  REQUIRE(r.s.size() == k);
  REQUIRE(r.u.rows() == m.rows());
  REQUIRE(r.u.cols() == k);
  REQUIRE(r.vt.rows() == k);
  REQUIRE(r.vt.cols() == m.cols());

  for (std::size_t i = 0; i < k; ++i) {
    CHECK(r.s[i] >= 0.0);
    if (i) CHECK(r.s[i - 1] >= r.s[i]);
  }
  CHECK(max_abs_diff(reconstruct(r), m) <= 1e-10);
  check_orthonormal_columns(r.u, 1e-12);
  check_orthonormal_columns(r.vt.transposed(), 1e-12);
}

}  // namespace

TEST_CASE("svd reconstructs matrices of every aspect ratio") {
  check_svd_contract(random_matrix(3, 5, 101));
  check_svd_contract(random_matrix(5, 3, 102));
  check_svd_contract(random_matrix(8, 8, 103));
  check_svd_contract(random_matrix(1, 6, 104));
  check_svd_contract(random_matrix(6, 1, 105));
  check_svd_contract(random_matrix(16, 200, 106));  // triggers the QR pre-reduction
}

TEST_CASE("svd handles rank-deficient input") {
  // Outer product: rank 1 regardless of size.
  Matrix m(6, 9);
  Rng rng(7);
  std::vector<double> a(6), b(9);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal();
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 9; ++j) m(i, j) = a[i] * b[j];
  }
  const SvdResult r = svd(m);
  CHECK(r.s[0] > 0.0);
  for (std::size_t i = 1; i < r.s.size(); ++i) CHECK(r.s[i] <= 1e-10 * r.s[0]);
  CHECK(max_abs_diff(reconstruct(r), m) <= 1e-10);
}

TEST_CASE("svd of a zero matrix is all-zero and does not throw") {
  const SvdResult r = svd(Matrix(4, 5));
  for (double s : r.s) CHECK(s == 0.0);
}

TEST_CASE("svd singular values agree with the eigen-decomposition oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix m = random_matrix(4 + seed % 5, 30, 200 + seed);
    const SvdResult r = svd(m);

    // Eigenvalues of m m^T are the squared singular values.
    oracle::Mat mmt = oracle::make_mat(m.rows(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.rows(); ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m.cols(); ++k) acc += m(i, k) * m(j, k);
        mmt[i][j] = acc;
      }
    }
    std::vector<double> w;
    oracle::Mat v;
    oracle::jacobi_eigen_symmetric(mmt, w, v);
    REQUIRE(w.size() == r.s.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(std::fabs(std::sqrt(std::max(w[i], 0.0)) - r.s[i]) <= 1e-9 * (1.0 + r.s[0]));
    }
  }
}

TEST_CASE("svd is deterministic and sign-canonicalized") {
  const Matrix m = random_matrix(7, 40, 55);
  const SvdResult a = svd(m);
  const SvdResult b = svd(m);
  CHECK(std::memcmp(a.u.data().data(), b.u.data().data(),
                    a.u.data().size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.vt.data().data(), b.vt.data().data(),
                    a.vt.data().size() * sizeof(double)) == 0);
  // Largest-magnitude entry of each left singular vector is non-negative.
  for (std::size_t j = 0; j < a.u.cols(); ++j) {
    double best = 0.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < a.u.rows(); ++i) {
      if (std::fabs(a.u(i, j)) > best) {
        best = std::fabs(a.u(i, j));
        arg = i;
      }
    }
    CHECK(a.u(arg, j) >= 0.0);
  }
}

TEST_CASE("householder_qr factors tall matrices") {
  const Matrix m = random_matrix(12, 5, 77);
  const QrResult qr = householder_qr(m);
  REQUIRE(qr.q.rows() == 12);
  REQUIRE(qr.q.cols() == 5);
  REQUIRE(qr.r.rows() == 5);
  REQUIRE(qr.r.cols() == 5);
  check_orthonormal_columns(qr.q, 1e-12);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < i; ++j) CHECK(qr.r(i, j) == 0.0);
  }
  CHECK(max_abs_diff(matmul(qr.q, qr.r), m) <= 1e-12);
}

TEST_CASE("center_rows zeroes every row mean and is idempotent") {
  const Matrix m = random_matrix(6, 31, 88);
  const Matrix c = center_rows(m);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c.cols(); ++j) mean += c(i, j);
    CHECK(std::fabs(mean / static_cast<double>(c.cols())) <= 1e-14);
  }
  const Matrix cc = center_rows(c);
  CHECK(max_abs_diff(c, cc) <= 1e-14);
}

TEST_CASE("effective_rank counts values above the relative cutoff") {
  CHECK(effective_rank({3.0, 2.0, 1e-12}, 1e-6) == 2);
  CHECK(effective_rank({3.0, 2.0, 1.0}, 1e-6) == 3);
  CHECK(effective_rank({5.0}, 1e-6) == 1);
  CHECK(effective_rank({}, 1e-6) == 0);
  CHECK(effective_rank({0.0, 0.0}, 1e-6) == 0);
  // Boundary: exactly at the cutoff counts as kept.
  CHECK(effective_rank({1.0, 1e-6}, 1e-6) >= 1);
}

TEST_CASE("matmul and matmul_abt agree with the plain triple loop") {
  const Matrix a = random_matrix(4, 6, 91);
  const Matrix b = random_matrix(6, 5, 92);
  const oracle::Mat oa = testutil::to_oracle(a);
  const oracle::Mat ob = testutil::to_oracle(b);

  const Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double want = 0.0;
      for (std::size_t k = 0; k < 6; ++k) want += oa[i][k] * ob[k][j];
      CHECK(std::fabs(c(i, j) - want) <= 1e-12);
    }
  }

  const Matrix bt = b.transposed();  // 5 x 6
  const Matrix d = matmul_abt(a, bt);  // a * bt^T = a * b
  CHECK(max_abs_diff(d, c) <= 1e-12);
}

TEST_CASE("matmul rejects mismatched shapes") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(4, 2)), ShapeError);
  CHECK_THROWS_AS(matmul_abt(Matrix(2, 3), Matrix(4, 2)), ShapeError);
}

#pragma once

// Shared fixture builders for the test binaries.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rsim/matrix.hpp"
#include "rsim/rng.hpp"

#include "oracle.hpp"

namespace testutil {

inline rsim::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  rsim::Rng rng(seed);
  rsim::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

inline rsim::ActivationMatrix random_activation(std::size_t rows, std::size_t cols,
                                                std::uint64_t seed,
                                                const std::string& layer = "layer",
                                                const std::string& model = "model") {
  return rsim::ActivationMatrix{random_matrix(rows, cols, seed), layer, model};
}

// y = A x + b 1^T with A invertible (identity plus small noise keeps the
// condition number tame) and a random per-row offset.
inline rsim::Matrix random_affine_image(const rsim::Matrix& x, std::uint64_t seed) {
  rsim::Rng rng(seed);
  const std::size_t p = x.rows();
  rsim::Matrix a(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      a(i, j) = (i == j ? 1.0 : 0.0) + 0.3 * rng.normal();
    }
  }
  std::vector<double> b(p);
  for (double& v : b) v = rng.normal();
  rsim::Matrix y(p, x.cols());
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < x.cols(); ++k) {
      double acc = b[i];
      for (std::size_t j = 0; j < p; ++j) acc += a(i, j) * x(j, k);
      y(i, k) = acc;
    }
  }
  return y;
}

inline oracle::Mat to_oracle(const rsim::Matrix& m) {
  oracle::Mat out = oracle::make_mat(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  }
  return out;
}

// Fresh directory under the system temp root; unique per call.
inline std::filesystem::path make_temp_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("rsim_test_" + tag + "_" + std::to_string(++counter) + "_" +
                    std::to_string(static_cast<long>(::getpid())));
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace testutil

#pragma once

#include <filesystem>
#include <string>

#include "rsim/matrix.hpp"

// On-disk formats shared by every tool in this repo.
//
// Binary matrix file (.rsm, canonical):
//   magic "RSM1" | u32 LE version = 1 | u64 LE rows | u64 LE cols |
//   rows*cols doubles, IEEE-754 64-bit LE, row-major. No padding, no trailer.
//
// Text matrix file (hand-written fixtures only):
//   line 1: "<rows> <cols>"; then rows lines of cols space-separated decimals.
//
// Bundle directory: manifest.txt with one "<layer_name> <filename>" line per
// layer, plus the referenced matrix files.

namespace rsim::io {

enum class MatrixFormat { kBinary, kText };

ActivationMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
// Detects the format from the leading magic bytes.
ActivationMatrix load_matrix(const std::filesystem::path& path);
void save_matrix(const ActivationMatrix& m, const std::filesystem::path& path,
                 MatrixFormat format);

MatrixBundle load_bundle(const std::filesystem::path& dir);
void save_bundle(const MatrixBundle& bundle, const std::filesystem::path& dir);

}  // namespace rsim::io

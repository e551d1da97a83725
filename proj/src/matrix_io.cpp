#include "rsim/matrix_io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rsim::io {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed: " + path.string());
  return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out.good()) throw IoError("write failed: " + path.string());
}

ActivationMatrix load_binary(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 24) throw FormatError("binary matrix file too short: " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, kMagic, 4) != 0) {
    throw FormatError("bad magic in " + path.string());
  }
  if (get_u32_le(p + 4) != kVersion) {
    throw FormatError("unsupported format version in " + path.string());
  }
  const std::uint64_t rows = get_u64_le(p + 8);
  const std::uint64_t cols = get_u64_le(p + 16);
  if (rows < 1 || cols < 1) throw FormatError("degenerate dimensions in " + path.string());
  const std::uint64_t count = rows * cols;
  if (cols != 0 && count / cols != rows) throw FormatError("dimension overflow in " + path.string());
  if (bytes.size() != 24 + count * 8) {
    throw FormatError("payload length disagrees with header in " + path.string());
  }
  std::vector<double> data(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    data[k] = std::bit_cast<double>(get_u64_le(p + 24 + k * 8));
  }
  ActivationMatrix m;
  m.values = Matrix(rows, cols, std::move(data));
  if (!m.values.all_finite()) throw DataError("non-finite value in " + path.string());
  return m;
}

void save_binary(const ActivationMatrix& m, const std::filesystem::path& path) {
  std::string bytes;
  bytes.reserve(24 + m.values.data().size() * 8);
  bytes.append(kMagic, 4);
  put_u32_le(bytes, kVersion);
  put_u64_le(bytes, m.rows());
  put_u64_le(bytes, m.cols());
  for (double v : m.values.data()) put_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
  write_file(path, bytes);
}

ActivationMatrix load_text(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::istringstream in(content);
  std::uint64_t rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 1 || cols < 1) {
    throw FormatError("malformed text matrix header in " + path.string());
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  // Tokenize by hand: stream extraction refuses "nan"/"inf", but those are
  // well-formed values that must survive to the finiteness check below.
  std::string token;
  while (in >> token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) {
      throw FormatError("malformed value in text matrix " + path.string());
    }
    data.push_back(v);
  }
  if (data.size() != rows * cols) {
    throw FormatError("value count disagrees with header in " + path.string());
  }
  ActivationMatrix m;
  m.values = Matrix(rows, cols, std::move(data));
  if (!m.values.all_finite()) throw DataError("non-finite value in " + path.string());
  return m;
}

void save_text(const ActivationMatrix& m, const std::filesystem::path& path) {
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%" PRIu64 " %" PRIu64 "\n",
                static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols()));
  out += buf;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m.values(i, j));
      if (j) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  write_file(path, out);
}

}  // namespace

ActivationMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  ActivationMatrix m =
      format == MatrixFormat::kBinary ? load_binary(path) : load_text(path);
  m.validate();
  return m;
}

ActivationMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open matrix file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0;
  return load_matrix(path, binary ? MatrixFormat::kBinary : MatrixFormat::kText);
}

void save_matrix(const ActivationMatrix& m, const std::filesystem::path& path,
                 MatrixFormat format) {
  m.validate();
  if (format == MatrixFormat::kBinary) {
    save_binary(m, path);
  } else {
    save_text(m, path);
  }
}

MatrixBundle load_bundle(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  if (!std::filesystem::exists(manifest_path)) {
    throw FormatError("missing manifest.txt in " + dir.string());
  }
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());

  MatrixBundle bundle;
  bundle.model_id = dir.filename().string();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string layer_name, filename;
    if (!(fields >> layer_name >> filename)) {
      throw FormatError("malformed manifest line '" + line + "' in " + manifest_path.string());
    }
    const auto matrix_path = dir / filename;
    if (!std::filesystem::exists(matrix_path)) {
      throw FormatError("manifest entry '" + layer_name + "' refers to missing file " +
                        matrix_path.string());
    }
    ActivationMatrix m = load_matrix(matrix_path);
    m.layer_name = layer_name;
    m.model_id = bundle.model_id;
    bundle.layers.push_back(std::move(m));
  }
  bundle.validate();
  return bundle;
}

void save_bundle(const MatrixBundle& bundle, const std::filesystem::path& dir) {
  bundle.validate();
  for (const auto& layer : bundle.layers) {
    if (layer.layer_name.find_first_of(" \t\n") != std::string::npos ||
        layer.layer_name.empty()) {
      throw FormatError("layer name unusable in manifest: '" + layer.layer_name + "'");
    }
  }
  std::filesystem::create_directories(dir);
  std::string manifest;
  for (const auto& layer : bundle.layers) {
    const std::string filename = layer.layer_name + ".rsm";
    save_matrix(layer, dir / filename, MatrixFormat::kBinary);
    manifest += layer.layer_name + " " + filename + "\n";
  }
  write_file(dir / "manifest.txt", manifest);
}

}  // namespace rsim::io

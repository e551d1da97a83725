#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rsim/errors.hpp"

namespace rsim {

// Dense row-major double matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("matrix data length does not match rows*cols");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    }
    return t;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Neuron activations over a fixed probe-input set: one row per neuron, one
// column per input. Every similarity comparison in this library consumes
// matrices in this orientation.
struct ActivationMatrix {
  Matrix values;
  std::string layer_name;
  std::string model_id;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }

  // rows >= 1, cols >= 1, all values finite.
  void validate() const {
    if (values.rows() < 1 || values.cols() < 1) {
      throw ShapeError("activation matrix must have at least one row and one column");
    }
    if (!values.all_finite()) {
      throw DataError("activation matrix contains non-finite values");
    }
  }
};

// The per-layer activation matrices of one trained model, in layer order.
// All members share the same probe-input count.
struct MatrixBundle {
  std::string model_id;
  std::vector<ActivationMatrix> layers;

  void validate() const {
    if (layers.empty()) throw BundleError("bundle has no layers");
    const std::size_t cols = layers.front().cols();
    for (const auto& layer : layers) {
      layer.validate();
      if (layer.cols() != cols) {
        throw BundleError("bundle layers disagree on input count: layer '" +
                          layer.layer_name + "' has " + std::to_string(layer.cols()) +
                          " columns, expected " + std::to_string(cols));
      }
      for (const auto& other : layers) {
        if (&other == &layer) break;
        if (other.layer_name == layer.layer_name) {
          throw BundleError("duplicate layer name in bundle: " + layer.layer_name);
        }
      }
    }
  }
};

}  // namespace rsim

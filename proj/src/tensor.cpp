#include "mtlab/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mtlab {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
  if (shape.empty()) {
    throw std::invalid_argument("Tensor: shape must have at least one dimension");
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) {
      throw std::invalid_argument("Tensor: shape dimensions must be positive, got " + shape_str(shape));
    }
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  const std::size_t n = checked_element_count(shape_);
  if (n != values_.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " expects " +
                                std::to_string(n) + " values, got " + std::to_string(values_.size()));
  }
  if (!all_finite()) {
    throw std::invalid_argument("Tensor: non-finite value in raw data");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  const std::size_t n = checked_element_count(shape);
  Tensor t;
  t.shape_ = std::move(shape);
  t.values_.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  const std::size_t n = checked_element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw std::logic_error("Tensor::rows: not a matrix, shape " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw std::logic_error("Tensor::cols: not a matrix, shape " + shape_str(shape_));
  return shape_[1];
}

bool Tensor::all_finite() const noexcept {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("dot: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Tensor& t) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return acc;
}

}  // namespace mtlab

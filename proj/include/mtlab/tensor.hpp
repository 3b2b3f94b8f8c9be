#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mtlab {

// Dense row-major tensor of 64-bit reals. Shapes are lists of positive
// integers; construction from raw data rejects non-finite values.
class Tensor {
public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t ndim() const noexcept { return shape_.size(); }
  bool is_scalar() const noexcept { return values_.size() == 1; }

  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_fast() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols_fast() + c]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  const std::vector<double>& values() const noexcept { return values_; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  bool operator==(const Tensor& other) const noexcept {
    return shape_ == other.shape_ && values_ == other.values_;
  }

private:
  std::size_t cols_fast() const noexcept { return shape_.back(); }

  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& t);

}  // namespace mtlab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/error.hpp"

namespace cascade {

std::int64_t shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Dense row-major tensor of doubles with explicit shape metadata.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(const std::vector<int>& shape) { return Tensor(shape); }
  static Tensor full(const std::vector<int>& shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  double& operator[](std::int64_t i) { return values_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return values_[static_cast<std::size_t>(i)]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double item() const;  // requires size() == 1

  void fill(double value);
  std::string shape_str() const { return cascade::shape_str(shape_); }

 private:
  std::vector<int> shape_;
  std::vector<double> values_;
};

}  // namespace cascade

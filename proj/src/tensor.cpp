#include "cascade/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cascade {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), values_(static_cast<std::size_t>(shape_size(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (static_cast<std::int64_t>(values_.size()) != shape_size(shape_)) {
    throw DimensionError("value count " + std::to_string(values_.size()) + " does not match shape " +
                         cascade::shape_str(shape_));
  }
}

Tensor Tensor::full(const std::vector<int>& shape, double value) {
  Tensor t(shape);
  t.fill(value);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str());
  }
  return shape_[static_cast<std::size_t>(axis)];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::item() const {
  if (values_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str());
  return values_[0];
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

}  // namespace cascade

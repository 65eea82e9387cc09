// Copyright 2026 affectfuse authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "affectfuse/tensor.hpp"

#include <cmath>
#include <sstream>

#include "affectfuse/error.hpp"

namespace affectfuse {

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

namespace {
void check_shape(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 3)
    throw DimensionError("tensor must have 1 to 3 axes, got " + shape_str(shape));
  for (int d : shape)
    if (d <= 0) throw DimensionError("tensor axes must be positive, got " + shape_str(shape));
}
}  // namespace

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  check_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  check_shape(shape);
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(std::vector<int> shape, double v) {
  check_shape(shape);
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), v);
  return Tensor(std::move(shape), std::move(d));
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

int Tensor::rows() const {
  if (ndim() != 2) throw DimensionError("rows() needs a 2D tensor, got " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (ndim() != 2) throw DimensionError("cols() needs a 2D tensor, got " + shape_str(shape));
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

}  // namespace affectfuse

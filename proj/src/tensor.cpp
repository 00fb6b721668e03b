#include "jemlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "jemlab/error.hpp"

namespace jemlab {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("axis out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_.at(1) + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_.at(1) + j]; }

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

std::size_t Tensor::row_size() const {
  if (shape_.empty()) throw DimensionError("row access on a scalar");
  return data_.size() / shape_[0];
}

std::span<const double> Tensor::row_span(std::size_t i) const {
  const auto n = row_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

std::span<double> Tensor::row_span(std::size_t i) {
  const auto n = row_size();
  return std::span<double>(data_).subspan(i * n, n);
}

Tensor Tensor::row(std::size_t i) const {
  if (i >= dim(0)) throw DimensionError("row index out of range");
  auto s = row_span(i);
  return Tensor(Shape(shape_.begin() + 1, shape_.end()), std::vector<double>(s.begin(), s.end()));
}

Tensor Tensor::stack(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("cannot stack zero tensors");
  Shape shape{rows.size()};
  shape.insert(shape.end(), rows[0].shape().begin(), rows[0].shape().end());
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto& r : rows) {
    if (r.shape() != rows[0].shape()) throw DimensionError("stack of mismatched shapes");
    data.insert(data.end(), r.values().begin(), r.values().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace jemlab

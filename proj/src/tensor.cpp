#include "cfx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "cfx/error.hpp"

namespace cfx {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw DimensionError("non-positive extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_size(shape_)), fill) {}

Tensor::Tensor(Shape shape, FloatBuffer data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != static_cast<std::int64_t>(data_.size()))
    throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " elements");
}

Tensor Tensor::from(Shape shape, std::initializer_list<float> values) {
  return Tensor(std::move(shape), FloatBuffer(values));
}

std::int64_t Tensor::dim(std::int64_t axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

float Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor t = *this;
  return std::move(t).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_size(shape) != size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::slice_rows(std::int64_t begin, std::int64_t end) const {
  if (rank() == 0 || begin < 0 || end > shape_[0] || begin >= end)
    throw DimensionError("row slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_str(shape_));
  Shape s = shape_;
  s[0] = end - begin;
  const std::int64_t stride = size() / shape_[0];
  FloatBuffer d(data_.begin() + begin * stride, data_.begin() + end * stride);
  return Tensor(std::move(s), std::move(d));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::check_finite(std::string_view what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i]))
      throw Error(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
  }
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  Shape s = parts.front().shape();
  if (s.empty()) throw DimensionError("concat_rows needs rank >= 1");
  s[0] = 0;
  FloatBuffer d;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<std::int64_t>(s.size()) || !std::equal(s.begin() + 1, s.end(), p.shape().begin() + 1))
      throw DimensionError("concat_rows: " + shape_str(p.shape()) + " vs " + shape_str(parts.front().shape()));
    s[0] += p.dim(0);
    d.insert(d.end(), p.vec().begin(), p.vec().end());
  }
  return Tensor(std::move(s), std::move(d));
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows of nothing");
  const Shape& inner = rows.front().shape();
  Shape s;
  s.push_back(static_cast<std::int64_t>(rows.size()));
  s.insert(s.end(), inner.begin(), inner.end());
  FloatBuffer d;
  d.reserve(static_cast<std::size_t>(shape_size(s)));
  for (const auto& r : rows) {
    if (r.shape() != inner)
      throw DimensionError("stack_rows: " + shape_str(r.shape()) + " vs " + shape_str(inner));
    d.insert(d.end(), r.vec().begin(), r.vec().end());
  }
  return Tensor(std::move(s), std::move(d));
}

double squared_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw DimensionError("squared_distance: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

double l1_norm(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += std::abs(static_cast<double>(v));
  return s;
}

}  // namespace cfx

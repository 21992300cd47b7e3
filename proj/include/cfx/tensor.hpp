#pragma once

#include <cstdint>
#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cfx {

using Shape = std::vector<std::int64_t>;

/// 64-byte aligned allocation. Vectorised reductions peel a head up to the
/// first aligned element, so unaligned buffers would sum in an order that
/// depends on the heap address.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of 32-bit reals. Image batches use (B, H, W, C).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, FloatBuffer data);
  Tensor(Shape shape, const std::vector<float>& data) : Tensor(std::move(shape), FloatBuffer(data.begin(), data.end())) {}

  static Tensor scalar(float v) { return Tensor(Shape{1}, FloatBuffer{v}); }
  static Tensor from(Shape shape, std::initializer_list<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t rank() const noexcept { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  float* ptr() noexcept { return data_.data(); }
  const float* ptr() const noexcept { return data_.data(); }
  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const FloatBuffer& vec() const noexcept { return data_; }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Value of a one-element tensor.
  float item() const;

  /// Same data, new shape. Throws DimensionError if the element count differs.
  Tensor reshaped(Shape shape) const&;
  Tensor reshaped(Shape shape) &&;

  /// Rows [begin, end) along axis 0.
  Tensor slice_rows(std::int64_t begin, std::int64_t end) const;
  /// Row `i` along axis 0 keeping a leading axis of 1.
  Tensor row(std::int64_t i) const { return slice_rows(i, i + 1); }

  void fill(float v);
  bool all_finite() const noexcept;
  /// Throws cfx::Error naming `what` and the first offending index.
  void check_finite(std::string_view what) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  FloatBuffer data_;
};

/// Stacks equally shaped tensors along a new leading axis.
Tensor stack_rows(std::span<const Tensor> rows);
/// Concatenates along axis 0; trailing extents must agree.
Tensor concat_rows(std::span<const Tensor> parts);

/// Sum of squares of (a - b), accumulated in double.
double squared_distance(const Tensor& a, const Tensor& b);
/// Sum of |a|, accumulated in double.
double l1_norm(const Tensor& a);

}  // namespace cfx

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace minetlab {

/// Raised for any tensor shape disagreement. The message names the operation
/// and both shapes involved.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Batch, channel, height, width. All tensors in the library are 4-D NCHW.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
    return os.str();
  }
};

/// Dense row-major NCHW tensor with value semantics.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.numel(), fill) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ShapeError("negative tensor dimension " + s.str());
    }
  }
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// Pointer to the (n, c) spatial plane.
  T* plane(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane(); }
  const T* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * shape_.c + c) * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Reinterprets the storage with a new shape of identical element count.
  Tensor reshaped(Shape s) const {
    if (s.numel() != data_.size()) {
      throw ShapeError("reshape " + shape_.str() + " -> " + s.str() + " changes element count");
    }
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  /// Copy of images [first, first + count).
  Tensor slice_batch(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n) {
      throw ShapeError("batch slice out of range for " + shape_.str());
    }
    Tensor out(Shape{count, shape_.c, shape_.h, shape_.w});
    const std::size_t per = static_cast<std::size_t>(shape_.c) * shape_.plane();
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(per * first), per * count, out.data());
    return out;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

/// Stacks single-image tensors of identical CHW shape along the batch axis.
template <class T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
  if (items.empty()) throw ShapeError("stack_batch: empty input");
  Shape s = items.front()->shape();
  s.n = 0;
  for (const auto* t : items) {
    if (t->c() != s.c || t->h() != s.h || t->w() != s.w) {
      throw ShapeError("stack_batch: inconsistent shapes " + items.front()->shape().str() + " vs " +
                       t->shape().str());
    }
    s.n += t->n();
  }
  Tensor<T> out(s);
  T* dst = out.data();
  for (const auto* t : items) dst = std::copy(t->data(), t->data() + t->size(), dst);
  return out;
}

}  // namespace minetlab

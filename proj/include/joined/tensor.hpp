#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace joined {

/// NCHW extent of a dense array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major NCHW array. Sample-level maps use n == 1.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw std::invalid_argument("negative tensor extent " + shape.str());
    }
  }
  BasicTensor(int n, int c, int h, int w, T fill = T(0))
      : BasicTensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  std::span<T> plane(int n, int c) {
    return {data_.data() + index(n, c, 0, 0), shape_.plane_size()};
  }
  std::span<const T> plane(int n, int c) const {
    return {data_.data() + index(n, c, 0, 0), shape_.plane_size()};
  }
  std::span<T> sample(int n) {
    const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane_size();
    return {data_.data() + n * len, len};
  }
  std::span<const T> sample(int n) const {
    const std::size_t len = static_cast<std::size_t>(shape_.c) * shape_.plane_size();
    return {data_.data() + n * len, len};
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

 private:
  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.str() +
                                " vs " + b.str());
  }
}

}  // namespace joined

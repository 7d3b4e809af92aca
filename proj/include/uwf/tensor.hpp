#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "uwf/errors.hpp"

namespace uwf {

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << c << ", " << h << ", " << w << ")";
    return os.str();
  }
};

// Planar (channels, height, width) feature map. This is the internal layout
// of every network op; ImageTensor carries the interleaved boundary layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape_(s), data_(s.size(), fill) {
    if (s.c < 0 || s.h < 0 || s.w < 0) throw ShapeError("negative tensor dimension");
  }
  Tensor(int c, int h, int w, T fill = T(0)) : Tensor(Shape{c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.c; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x]; }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_.h + y) * shape_.w + x];
  }

  T* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
  const T* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  void require_same(const Tensor& o, const char* what) const {
    if (!(shape_ == o.shape_))
      throw ShapeError(std::string(what) + ": shape mismatch " + shape_.str() + " vs " + o.shape_.str());
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same(b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T>
T sum_of_squares(const Tensor<T>& a) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * a[i];
  return static_cast<T>(s);
}

template <typename T>
T mean(const Tensor<T>& a) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
  return a.size() ? static_cast<T>(s / a.size()) : T(0);
}

}  // namespace uwf

#pragma once

#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "edgeseg/error.hpp"

namespace edgeseg {

/// Extents of a rank-4 tensor in batch-channel-height-width order.
struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  friend bool operator==(const Shape4&, const Shape4&) = default;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense rank-4 array, contiguous row-major in n, c, h, w order. The carrier
/// of every activation and weight in the library. Element type is float for
/// the default compute path and double for gradient verification.
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{1, 1, 1, 1}, data_(1, T(0)) {}

  explicit Tensor(Shape4 s) : shape_(s) {
    check_shape(s);
    data_.assign(static_cast<std::size_t>(s.numel()), T(0));
  }

  Tensor(Shape4 s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
    check_shape(s);
    if (static_cast<std::int64_t>(data_.size()) != s.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + s.str());
    }
  }

  static Tensor full(Shape4 s, T value) {
    Tensor t(s);
    for (T& x : t.data_) x = value;
    return t;
  }

  const Shape4& shape() const { return shape_; }
  std::int64_t numel() const { return shape_.numel(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  std::int64_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + h) *
               shape_.w +
           w;
  }
  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const {
    return data_[index(n, c, h, w)];
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return Tensor<U>(shape_, std::move(out));
  }

 private:
  static void check_shape(const Shape4& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
      throw ShapeError("tensor extents must all be >= 1, got " + s.str());
    }
  }

  Shape4 shape_;
  std::vector<T> data_;
};

/// Per-pixel integer class map of shape (n, h, w).
class LabelMap {
 public:
  LabelMap() : n_(1), h_(1), w_(1), data_(1, 0) {}

  LabelMap(int n, int h, int w) : n_(n), h_(h), w_(w) {
    if (n < 1 || h < 1 || w < 1)
      throw ShapeError("label map extents must all be >= 1");
    data_.assign(static_cast<std::size_t>(numel()), 0);
  }

  LabelMap(int n, int h, int w, std::vector<std::int32_t> data)
      : n_(n), h_(h), w_(w), data_(std::move(data)) {
    if (n < 1 || h < 1 || w < 1)
      throw ShapeError("label map extents must all be >= 1");
    if (static_cast<std::int64_t>(data_.size()) != numel())
      throw ShapeError("label map data length does not match extents");
  }

  int n() const { return n_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::int64_t numel() const {
    return static_cast<std::int64_t>(n_) * h_ * w_;
  }

  std::int32_t& at(int n, int h, int w) {
    return data_[(static_cast<std::size_t>(n) * h_ + h) * w_ + w];
  }
  std::int32_t at(int n, int h, int w) const {
    return data_[(static_cast<std::size_t>(n) * h_ + h) * w_ + w];
  }

  std::span<std::int32_t> values() { return data_; }
  std::span<const std::int32_t> values() const { return data_; }

  friend bool operator==(const LabelMap& a, const LabelMap& b) {
    return a.n_ == b.n_ && a.h_ == b.h_ && a.w_ == b.w_ && a.data_ == b.data_;
  }

 private:
  int n_, h_, w_;
  std::vector<std::int32_t> data_;
};

}  // namespace edgeseg

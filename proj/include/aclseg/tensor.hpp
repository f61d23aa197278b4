#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aclseg/errors.hpp"

namespace aclseg {

// N x H x W x C. Convolution kernels reuse the same 4-tuple as kh x kw x Cin x Cout
// and per-channel vectors are stored as 1 x 1 x 1 x C.
struct Shape {
  int n = 1;
  int h = 1;
  int w = 1;
  int c = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * h * w * c;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

Shape vector_shape(int c);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  int c() const { return shape_.c; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  const std::vector<T>& vec() const { return data_; }

  std::size_t offset(int n, int i, int j, int ch) const {
    return ((static_cast<std::size_t>(n) * shape_.h + i) * shape_.w + j) * shape_.c + ch;
  }
  T& at(int n, int i, int j, int ch) { return data_[offset(n, i, j, ch)]; }
  T at(int n, int i, int j, int ch) const { return data_[offset(n, i, j, ch)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  void fill(T v);
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

void check_shape(const Shape& s);

}  // namespace aclseg

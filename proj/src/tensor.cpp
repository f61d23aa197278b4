#include "aclseg/tensor.hpp"

#include <algorithm>

namespace aclseg {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + "," +
         std::to_string(c) + "]";
}

Shape vector_shape(int c) { return Shape{1, 1, 1, c}; }

void check_shape(const Shape& s) {
  if (s.n < 1 || s.h < 1 || s.w < 1 || s.c < 1)
    throw ShapeError("tensor dimensions must be >= 1, got " + s.str());
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(shape) {
  check_shape(shape_);
  data_.assign(shape_.numel(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_.numel())
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_.str());
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace aclseg

#include "canopy/tensor.hpp"

#include "canopy/error.hpp"

namespace canopy::nn {

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) + ", " +
         std::to_string(s.w) + ")";
}

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  require(data_.size() == shape_.size(), ErrorCode::ShapeError,
          "tensor data size does not match shape " + to_string(shape_));
}

template class Tensor4<float>;
template class Tensor4<double>;

}  // namespace canopy::nn

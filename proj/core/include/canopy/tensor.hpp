#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace canopy::nn {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t item_size() const { return static_cast<std::size_t>(c) * h * w; }
  std::size_t plane_size() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);

/// Dense NCHW tensor.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, T fill = T{0}) : shape_(shape), data_(shape.size(), fill) {}
  Tensor4(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  std::span<T> item(int n) { return std::span<T>(data_).subspan(n * shape_.item_size(), shape_.item_size()); }
  std::span<const T> item(int n) const {
    return std::span<const T>(data_).subspan(n * shape_.item_size(), shape_.item_size());
  }

  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  T at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  Shape4 shape_;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& t) {
  Tensor4<To> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out.data()[i] = static_cast<To>(t.data()[i]);
  return out;
}

}  // namespace canopy::nn

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "canopy/tensor.hpp"

namespace canopy::nn {

/// 2-D cross-correlation geometry. Weights are laid out
/// [out_channels][in_channels][kernel][kernel].
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }
  int out_extent(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
};

ConvSpec conv3x3(int in_channels, int out_channels);
ConvSpec conv1x1(int in_channels, int out_channels);
ConvSpec conv2x2_stride2(int in_channels, int out_channels);

// `bias` may be empty (no bias term).
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvSpec& spec, std::span<const T> weight,
                          std::span<const T> bias);

// Accumulates into dweight / dbias (either may be empty to skip) and writes dx
// when non-null.
template <typename T>
void conv2d_backward(const Tensor4<T>& x, const ConvSpec& spec, std::span<const T> weight, const Tensor4<T>& dy,
                     Tensor4<T>* dx, std::span<T> dweight, std::span<T> dbias);

template <typename T>
void relu_inplace(Tensor4<T>& x);
// Gradient of relu from its output: passes dy where y > 0 (subgradient 0 at 0).
template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy);

template <typename T>
struct PoolOutput {
  Tensor4<T> y;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

// 2x2 max pooling, stride 2. Ties go to the first maximal element in
// row-major order.
template <typename T>
PoolOutput<T> maxpool2x2_forward(const Tensor4<T>& x);
template <typename T>
Tensor4<T> maxpool2x2_backward(const Shape4& input_shape, const std::vector<std::uint32_t>& argmax,
                               const Tensor4<T>& dy);

// Bilinear 2x upsampling with half-pixel centers and edge clamping.
template <typename T>
Tensor4<T> bilinear_up2x_forward(const Tensor4<T>& x);
// Transpose of the interpolation operator.
template <typename T>
Tensor4<T> bilinear_up2x_backward(const Shape4& input_shape, const Tensor4<T>& dy);

// Channels of `a` first, then `b`.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
void split_channels(const Tensor4<T>& dy, int channels_a, Tensor4<T>& da, Tensor4<T>& db);

/// Per-channel statistics saved by a training-mode batch-norm pass.
template <typename T>
struct BatchNormCache {
  Tensor4<T> normalized;
  std::vector<T> inv_std;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename T>
Tensor4<T> batchnorm_forward_train(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                   std::span<T> running_mean, std::span<T> running_var, BatchNormCache<T>* cache);
template <typename T>
Tensor4<T> batchnorm_forward_eval(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  std::span<const T> running_mean, std::span<const T> running_var);
template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor4<T>& dy,
                              std::span<T> dgamma, std::span<T> dbeta);

}  // namespace canopy::nn

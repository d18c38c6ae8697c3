#include "canopy/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "canopy/error.hpp"
#include "canopy/parallel.hpp"

namespace canopy::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

bool is_pointwise(const ConvSpec& s) { return s.kernel == 1 && s.stride == 1 && s.padding == 0; }

void check_conv(const Shape4& x, const ConvSpec& spec, std::size_t weight_size, std::size_t bias_size) {
  require(spec.kernel >= 1 && spec.stride >= 1 && spec.padding >= 0, ErrorCode::ShapeError,
          "invalid convolution geometry");
  require(x.c == spec.in_channels, ErrorCode::ShapeError,
          "conv input has " + std::to_string(x.c) + " channels, expected " + std::to_string(spec.in_channels));
  require(weight_size == spec.weight_count(), ErrorCode::ShapeError, "conv weight size mismatch");
  require(bias_size == 0 || bias_size == static_cast<std::size_t>(spec.out_channels), ErrorCode::ShapeError,
          "conv bias size mismatch");
  require(spec.out_extent(x.h) >= 1 && spec.out_extent(x.w) >= 1, ErrorCode::ShapeError,
          "conv input " + to_string(x) + " too small for kernel");
}

// col[(c*k + ki)*k + kj][oh*Wo + ow] = x[c][oh*s - p + ki][ow*s - p + kj]
template <typename T>
void im2col(const T* x, int channels, int h, int w, const ConvSpec& s, int ho, int wo, T* col) {
  const int k = s.kernel;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * s.stride - s.padding + ki;
          T* dst = row + static_cast<std::size_t>(oh) * wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * w;
          if (s.stride == 1) {
            const int shift = kj - s.padding;
            const int lo = std::clamp(-shift, 0, wo);
            const int hi = std::clamp(w - shift, 0, wo);
            std::fill(dst, dst + lo, T{0});
            if (hi > lo) std::copy(src + lo + shift, src + hi + shift, dst + lo);
            std::fill(dst + std::max(lo, hi), dst + wo, T{0});
          } else {
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * s.stride - s.padding + kj;
              dst[ow] = (iw >= 0 && iw < w) ? src[iw] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, const ConvSpec& s, int ho, int wo, T* x) {
  const int k = s.kernel;
  std::fill(x, x + static_cast<std::size_t>(channels) * h * w, T{0});
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + (static_cast<std::size_t>(c * k + ki) * k + kj) * ho * wo;
        for (int oh = 0; oh < ho; ++oh) {
          const int ih = oh * s.stride - s.padding + ki;
          if (ih < 0 || ih >= h) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * w;
          const T* src = row + static_cast<std::size_t>(oh) * wo;
          for (int ow = 0; ow < wo; ++ow) {
            const int iw = ow * s.stride - s.padding + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

ConvSpec conv3x3(int in_channels, int out_channels) { return {in_channels, out_channels, 3, 1, 1}; }
ConvSpec conv1x1(int in_channels, int out_channels) { return {in_channels, out_channels, 1, 1, 0}; }
ConvSpec conv2x2_stride2(int in_channels, int out_channels) { return {in_channels, out_channels, 2, 2, 0}; }

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T>& x, const ConvSpec& spec, std::span<const T> weight,
                          std::span<const T> bias) {
  const auto& xs = x.shape();
  check_conv(xs, spec, weight.size(), bias.size());
  const int ho = spec.out_extent(xs.h), wo = spec.out_extent(xs.w);
  const int kdim = spec.in_channels * spec.kernel * spec.kernel;
  const int pix = ho * wo;
  Tensor4<T> y(Shape4{xs.n, spec.out_channels, ho, wo});
  ConstMatMap<T> wm(weight.data(), spec.out_channels, kdim);
  const bool pointwise = is_pointwise(spec);
  parallel_for(static_cast<std::size_t>(xs.n), [&](std::size_t n) {
    std::vector<T> col;
    const T* cols = x.item(static_cast<int>(n)).data();
    if (!pointwise) {
      col.resize(static_cast<std::size_t>(kdim) * pix);
      im2col(cols, xs.c, xs.h, xs.w, spec, ho, wo, col.data());
      cols = col.data();
    }
    MatMap<T> ym(y.item(static_cast<int>(n)).data(), spec.out_channels, pix);
    ym.noalias() = wm * ConstMatMap<T>(cols, kdim, pix);
    if (!bias.empty())
      for (int o = 0; o < spec.out_channels; ++o) ym.row(o).array() += bias[static_cast<std::size_t>(o)];
  });
  return y;
}

template <typename T>
void conv2d_backward(const Tensor4<T>& x, const ConvSpec& spec, std::span<const T> weight, const Tensor4<T>& dy,
                     Tensor4<T>* dx, std::span<T> dweight, std::span<T> dbias) {
  const auto& xs = x.shape();
  check_conv(xs, spec, weight.size(), 0);
  const int ho = spec.out_extent(xs.h), wo = spec.out_extent(xs.w);
  require(dy.shape() == Shape4{xs.n, spec.out_channels, ho, wo}, ErrorCode::ShapeError,
          "conv output gradient has shape " + to_string(dy.shape()));
  require(dweight.empty() || dweight.size() == spec.weight_count(), ErrorCode::ShapeError,
          "conv weight gradient size mismatch");
  require(dbias.empty() || dbias.size() == static_cast<std::size_t>(spec.out_channels), ErrorCode::ShapeError,
          "conv bias gradient size mismatch");
  const int kdim = spec.in_channels * spec.kernel * spec.kernel;
  const int pix = ho * wo;
  const bool pointwise = is_pointwise(spec);

  // Parameter gradients accumulate item by item in a fixed order, so the
  // result is independent of the thread count.
  if (!dweight.empty() || !dbias.empty()) {
    std::vector<T> col;
    if (!pointwise) col.resize(static_cast<std::size_t>(kdim) * pix);
    for (int n = 0; n < xs.n; ++n) {
      ConstMatMap<T> dym(dy.item(n).data(), spec.out_channels, pix);
      if (!dweight.empty()) {
        const T* cols = x.item(n).data();
        if (!pointwise) {
          im2col(cols, xs.c, xs.h, xs.w, spec, ho, wo, col.data());
          cols = col.data();
        }
        MatMap<T> dwm(dweight.data(), spec.out_channels, kdim);
        dwm.noalias() += dym * ConstMatMap<T>(cols, kdim, pix).transpose();
      }
      if (!dbias.empty())
        for (int o = 0; o < spec.out_channels; ++o) dbias[static_cast<std::size_t>(o)] += dym.row(o).sum();
    }
  }

  if (dx) {
    *dx = Tensor4<T>(xs);
    ConstMatMap<T> wm(weight.data(), spec.out_channels, kdim);
    parallel_for(static_cast<std::size_t>(xs.n), [&](std::size_t n) {
      ConstMatMap<T> dym(dy.item(static_cast<int>(n)).data(), spec.out_channels, pix);
      T* dxi = dx->item(static_cast<int>(n)).data();
      if (pointwise) {
        MatMap<T>(dxi, kdim, pix).noalias() = wm.transpose() * dym;
      } else {
        RowMat<T> dcol = wm.transpose() * dym;
        col2im(dcol.data(), xs.c, xs.h, xs.w, spec, ho, wo, dxi);
      }
    });
  }
}

template <typename T>
void relu_inplace(Tensor4<T>& x) {
  for (auto& v : x.values()) v = v > T{0} ? v : T{0};
}

template <typename T>
Tensor4<T> relu_backward(const Tensor4<T>& y, const Tensor4<T>& dy) {
  require(y.shape() == dy.shape(), ErrorCode::ShapeError, "relu gradient shape mismatch");
  Tensor4<T> dx(y.shape());
  const T* yv = y.data();
  const T* g = dy.data();
  T* out = dx.data();
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = yv[i] > T{0} ? g[i] : T{0};
  return dx;
}

template <typename T>
PoolOutput<T> maxpool2x2_forward(const Tensor4<T>& x) {
  const auto& s = x.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, ErrorCode::ShapeError,
          "max pooling needs even height and width, got " + to_string(s));
  PoolOutput<T> out{Tensor4<T>(Shape4{s.n, s.c, s.h / 2, s.w / 2}), {}};
  out.argmax.resize(out.y.size());
  const int ho = s.h / 2, wo = s.w / 2;
  std::size_t o = 0;
  for (int p = 0; p < s.n * s.c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * s.h * s.w;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j, ++o) {
        const std::size_t cand[4] = {base + static_cast<std::size_t>(2 * i) * s.w + 2 * j,
                                     base + static_cast<std::size_t>(2 * i) * s.w + 2 * j + 1,
                                     base + static_cast<std::size_t>(2 * i + 1) * s.w + 2 * j,
                                     base + static_cast<std::size_t>(2 * i + 1) * s.w + 2 * j + 1};
        std::size_t best = cand[0];
        for (int k = 1; k < 4; ++k)
          if (x.data()[cand[k]] > x.data()[best]) best = cand[k];
        out.y.data()[o] = x.data()[best];
        out.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> maxpool2x2_backward(const Shape4& input_shape, const std::vector<std::uint32_t>& argmax,
                               const Tensor4<T>& dy) {
  require(argmax.size() == dy.size(), ErrorCode::ShapeError, "pool gradient size mismatch");
  Tensor4<T> dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data()[argmax[o]] += dy.data()[o];
  return dx;
}

namespace {

struct Tap {
  int i0;
  int i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> up2x_taps(int n_in) {
  std::vector<Tap> taps(static_cast<std::size_t>(2 * n_in));
  for (int o = 0; o < 2 * n_in; ++o) {
    const double pos = std::max((o + 0.5) * 0.5 - 0.5, 0.0);
    const int i0 = std::min(static_cast<int>(pos), n_in - 1);
    const int i1 = std::min(i0 + 1, n_in - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, pos - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor4<T> bilinear_up2x_forward(const Tensor4<T>& x) {
  const auto& s = x.shape();
  Tensor4<T> y(Shape4{s.n, s.c, 2 * s.h, 2 * s.w});
  const auto ty = up2x_taps(s.h);
  const auto tx = up2x_taps(s.w);
  const int wo = 2 * s.w;
  for (int p = 0; p < s.n * s.c; ++p) {
    const T* in = x.data() + static_cast<std::size_t>(p) * s.h * s.w;
    T* out = y.data() + static_cast<std::size_t>(p) * 4 * s.h * s.w;
    for (int oy = 0; oy < 2 * s.h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T wy1 = static_cast<T>(a.w1), wy0 = T{1} - wy1;
      const T* r0 = in + static_cast<std::size_t>(a.i0) * s.w;
      const T* r1 = in + static_cast<std::size_t>(a.i1) * s.w;
      for (int ox = 0; ox < wo; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T wx1 = static_cast<T>(b.w1), wx0 = T{1} - wx1;
        out[static_cast<std::size_t>(oy) * wo + ox] =
            wy0 * (wx0 * r0[b.i0] + wx1 * r0[b.i1]) + wy1 * (wx0 * r1[b.i0] + wx1 * r1[b.i1]);
      }
    }
  }
  return y;
}

template <typename T>
Tensor4<T> bilinear_up2x_backward(const Shape4& s, const Tensor4<T>& dy) {
  require(dy.shape() == Shape4{s.n, s.c, 2 * s.h, 2 * s.w}, ErrorCode::ShapeError,
          "upsample gradient has shape " + to_string(dy.shape()));
  Tensor4<T> dx(s);
  const auto ty = up2x_taps(s.h);
  const auto tx = up2x_taps(s.w);
  const int wo = 2 * s.w;
  for (int p = 0; p < s.n * s.c; ++p) {
    const T* g = dy.data() + static_cast<std::size_t>(p) * 4 * s.h * s.w;
    T* out = dx.data() + static_cast<std::size_t>(p) * s.h * s.w;
    for (int oy = 0; oy < 2 * s.h; ++oy) {
      const auto& a = ty[static_cast<std::size_t>(oy)];
      const T wy1 = static_cast<T>(a.w1), wy0 = T{1} - wy1;
      T* r0 = out + static_cast<std::size_t>(a.i0) * s.w;
      T* r1 = out + static_cast<std::size_t>(a.i1) * s.w;
      for (int ox = 0; ox < wo; ++ox) {
        const auto& b = tx[static_cast<std::size_t>(ox)];
        const T wx1 = static_cast<T>(b.w1), wx0 = T{1} - wx1;
        const T v = g[static_cast<std::size_t>(oy) * wo + ox];
        r0[b.i0] += wy0 * wx0 * v;
        r0[b.i1] += wy0 * wx1 * v;
        r1[b.i0] += wy1 * wx0 * v;
        r1[b.i1] += wy1 * wx1 * v;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, ErrorCode::ShapeError,
          "concat needs equal batch and spatial size, got " + to_string(sa) + " and " + to_string(sb));
  Tensor4<T> y(Shape4{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    auto dst = y.item(n);
    auto ia = a.item(n);
    auto ib = b.item(n);
    std::copy(ia.begin(), ia.end(), dst.begin());
    std::copy(ib.begin(), ib.end(), dst.begin() + static_cast<std::ptrdiff_t>(ia.size()));
  }
  return y;
}

template <typename T>
void split_channels(const Tensor4<T>& dy, int channels_a, Tensor4<T>& da, Tensor4<T>& db) {
  const auto& s = dy.shape();
  require(channels_a >= 0 && channels_a <= s.c, ErrorCode::ShapeError, "split point outside channel range");
  da = Tensor4<T>(Shape4{s.n, channels_a, s.h, s.w});
  db = Tensor4<T>(Shape4{s.n, s.c - channels_a, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    auto src = dy.item(n);
    const auto cut = static_cast<std::ptrdiff_t>(da.shape().item_size());
    std::copy(src.begin(), src.begin() + cut, da.item(n).begin());
    std::copy(src.begin() + cut, src.end(), db.item(n).begin());
  }
}

template <typename T>
Tensor4<T> batchnorm_forward_train(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                   std::span<T> running_mean, std::span<T> running_var, BatchNormCache<T>* cache) {
  const auto& s = x.shape();
  const auto c = static_cast<std::size_t>(s.c);
  require(gamma.size() == c && beta.size() == c && running_mean.size() == c && running_var.size() == c,
          ErrorCode::ShapeError, "batch-norm parameter size mismatch");
  const std::size_t plane = s.plane_size();
  const double count = static_cast<double>(s.n) * static_cast<double>(plane);
  Tensor4<T> y(s);
  Tensor4<T> xhat(s);
  std::vector<T> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.data() + (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / count;
    const double istd = 1.0 / std::sqrt(var + kBatchNormEps);
    inv_std[ch] = static_cast<T>(istd);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = static_cast<T>((x.data()[off + i] - mean) * istd);
        xhat.data()[off + i] = xh;
        y.data()[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
    const double unbiased = count > 1 ? sq / (count - 1) : var;
    running_mean[ch] = static_cast<T>((1 - kBatchNormMomentum) * running_mean[ch] + kBatchNormMomentum * mean);
    running_var[ch] = static_cast<T>((1 - kBatchNormMomentum) * running_var[ch] + kBatchNormMomentum * unbiased);
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <typename T>
Tensor4<T> batchnorm_forward_eval(const Tensor4<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  std::span<const T> running_mean, std::span<const T> running_var) {
  const auto& s = x.shape();
  const auto c = static_cast<std::size_t>(s.c);
  require(gamma.size() == c && beta.size() == c && running_mean.size() == c && running_var.size() == c,
          ErrorCode::ShapeError, "batch-norm parameter size mismatch");
  const std::size_t plane = s.plane_size();
  Tensor4<T> y(s);
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
      const T scale = static_cast<T>(gamma[ch] / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEps));
      const T shift = beta[ch] - scale * running_mean[ch];
      for (std::size_t i = 0; i < plane; ++i) y.data()[off + i] = scale * x.data()[off + i] + shift;
    }
  }
  return y;
}

template <typename T>
Tensor4<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor4<T>& dy,
                              std::span<T> dgamma, std::span<T> dbeta) {
  const auto& s = dy.shape();
  require(cache.normalized.shape() == s, ErrorCode::ShapeError, "batch-norm gradient shape mismatch");
  const auto c = static_cast<std::size_t>(s.c);
  const std::size_t plane = s.plane_size();
  const double count = static_cast<double>(s.n) * static_cast<double>(plane);
  Tensor4<T> dx(s);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy.data()[off + i];
        sum_dy_xh += dy.data()[off + i] * cache.normalized.data()[off + i];
      }
    }
    if (!dgamma.empty()) dgamma[ch] += static_cast<T>(sum_dy_xh);
    if (!dbeta.empty()) dbeta[ch] += static_cast<T>(sum_dy);
    const double k = gamma[ch] * cache.inv_std[ch] / count;
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        dx.data()[off + i] = static_cast<T>(
            k * (count * dy.data()[off + i] - sum_dy - cache.normalized.data()[off + i] * sum_dy_xh));
    }
  }
  return dx;
}

#define CANOPY_INSTANTIATE_LAYERS(T)                                                                            \
  template Tensor4<T> conv2d_forward<T>(const Tensor4<T>&, const ConvSpec&, std::span<const T>,                  \
                                        std::span<const T>);                                                     \
  template void conv2d_backward<T>(const Tensor4<T>&, const ConvSpec&, std::span<const T>, const Tensor4<T>&,    \
                                   Tensor4<T>*, std::span<T>, std::span<T>);                                     \
  template void relu_inplace<T>(Tensor4<T>&);                                                                    \
  template Tensor4<T> relu_backward<T>(const Tensor4<T>&, const Tensor4<T>&);                                    \
  template PoolOutput<T> maxpool2x2_forward<T>(const Tensor4<T>&);                                               \
  template Tensor4<T> maxpool2x2_backward<T>(const Shape4&, const std::vector<std::uint32_t>&, const Tensor4<T>&); \
  template Tensor4<T> bilinear_up2x_forward<T>(const Tensor4<T>&);                                               \
  template Tensor4<T> bilinear_up2x_backward<T>(const Shape4&, const Tensor4<T>&);                               \
  template Tensor4<T> concat_channels<T>(const Tensor4<T>&, const Tensor4<T>&);                                  \
  template void split_channels<T>(const Tensor4<T>&, int, Tensor4<T>&, Tensor4<T>&);                             \
  template Tensor4<T> batchnorm_forward_train<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>,      \
                                                 std::span<T>, std::span<T>, BatchNormCache<T>*);                \
  template Tensor4<T> batchnorm_forward_eval<T>(const Tensor4<T>&, std::span<const T>, std::span<const T>,       \
                                                std::span<const T>, std::span<const T>);                         \
  template Tensor4<T> batchnorm_backward<T>(const BatchNormCache<T>&, std::span<const T>, const Tensor4<T>&,     \
                                            std::span<T>, std::span<T>);

CANOPY_INSTANTIATE_LAYERS(float)
CANOPY_INSTANTIATE_LAYERS(double)

#undef CANOPY_INSTANTIATE_LAYERS

}  // namespace canopy::nn

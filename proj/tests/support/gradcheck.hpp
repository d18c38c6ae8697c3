#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "canopy/layers.hpp"
#include "canopy/raster.hpp"
#include "canopy/tensor.hpp"
#include "canopy/trainer.hpp"

namespace canopy::testing {

using nn::Shape4;
using nn::Tensor4;

inline Tensor4<double> random_tensor(Shape4 s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4<double> t(s);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? std::sqrt(d) : std::sqrt(d) / scale;
}

// Central differences of a scalar function with respect to `x`, in place.
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& f,
                                            double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

struct GradCheck {
  int trials = 0;
  double max_rel_error = 0.0;
  void add(double e) {
    ++trials;
    max_rel_error = std::max(max_rel_error, e);
  }
};

inline std::vector<double> concat(std::initializer_list<std::span<const double>> parts) {
  std::vector<double> out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Loss L = <g, conv(x)> checked against x, weights and biases.
inline GradCheck check_conv(int trials, int kind, std::mt19937_64& rng) {
  GradCheck r;
  std::uniform_int_distribution<int> ch(1, 3), ext(2, 4), batch(1, 2);
  for (int t = 0; t < trials; ++t) {
    const int ci = ch(rng), co = ch(rng);
    const auto spec = kind == 0 ? nn::conv3x3(ci, co) : kind == 1 ? nn::conv1x1(ci, co) : nn::conv2x2_stride2(ci, co);
    const int h = 2 * ext(rng), w = 2 * ext(rng);
    auto x = random_tensor({batch(rng), ci, h, w}, rng);
    auto weight = random_vector(spec.weight_count(), rng);
    auto bias = random_vector(static_cast<std::size_t>(co), rng);
    const auto y0 = nn::conv2d_forward<double>(x, spec, weight, bias);
    const auto g = random_tensor(y0.shape(), rng);
    auto loss = [&] { return dot(nn::conv2d_forward<double>(x, spec, weight, bias).values(), g.values()); };
    Tensor4<double> dx(x.shape());
    std::vector<double> dw(weight.size(), 0.0), db(bias.size(), 0.0);
    nn::conv2d_backward<double>(x, spec, weight, g, &dx, dw, db);
    const auto nx = numeric_gradient(x.values(), loss);
    const auto nw = numeric_gradient(weight, loss);
    const auto nb = numeric_gradient(bias, loss);
    r.add(relative_error(concat({dx.values(), dw, db}), concat({nx, nw, nb})));
  }
  return r;
}

inline GradCheck check_relu(int trials, std::mt19937_64& rng) {
  GradCheck r;
  std::uniform_int_distribution<int> ext(2, 6);
  std::bernoulli_distribution sign(0.5);
  for (int t = 0; t < trials; ++t) {
    // Keep inputs away from the kink so the finite difference is smooth.
    auto x = random_tensor({2, 2, ext(rng), ext(rng)}, rng, 0.05, 1.0);
    for (auto& v : x.values()) v = sign(rng) ? v : -v;
    auto y0 = x;
    nn::relu_inplace(y0);
    const auto g = random_tensor(x.shape(), rng);
    auto loss = [&] {
      auto y = x;
      nn::relu_inplace(y);
      return dot(y.values(), g.values());
    };
    const auto dx = nn::relu_backward(y0, g);
    r.add(relative_error(dx.values(), numeric_gradient(x.values(), loss)));
  }
  return r;
}

inline GradCheck check_maxpool(int trials, std::mt19937_64& rng) {
  GradCheck r;
  std::uniform_int_distribution<int> ext(1, 4);
  for (int t = 0; t < trials; ++t) {
    const Shape4 s{2, 2, 2 * ext(rng), 2 * ext(rng)};
    // A shuffled grid of well-separated values rules out near-ties.
    std::vector<double> vals(s.size());
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>(i);
    std::shuffle(vals.begin(), vals.end(), rng);
    Tensor4<double> x(s, vals);
    const auto pooled = nn::maxpool2x2_forward(x);
    const auto g = random_tensor(pooled.y.shape(), rng);
    auto loss = [&] { return dot(nn::maxpool2x2_forward(x).y.values(), g.values()); };
    const auto dx = nn::maxpool2x2_backward(s, pooled.argmax, g);
    r.add(relative_error(dx.values(), numeric_gradient(x.values(), loss)));
  }
  return r;
}

inline GradCheck check_bilinear(int trials, std::mt19937_64& rng) {
  GradCheck r;
  std::uniform_int_distribution<int> ext(1, 5);
  for (int t = 0; t < trials; ++t) {
    auto x = random_tensor({2, 2, ext(rng), ext(rng)}, rng);
    const auto g = random_tensor(nn::bilinear_up2x_forward(x).shape(), rng);
    auto loss = [&] { return dot(nn::bilinear_up2x_forward(x).values(), g.values()); };
    const auto dx = nn::bilinear_up2x_backward(x.shape(), g);
    r.add(relative_error(dx.values(), numeric_gradient(x.values(), loss)));
  }
  return r;
}

inline GradCheck check_concat(int trials, std::mt19937_64& rng) {
  GradCheck r;
  std::uniform_int_distribution<int> ch(1, 3), ext(1, 5);
  for (int t = 0; t < trials; ++t) {
    const int h = ext(rng), w = ext(rng);
    auto a = random_tensor({2, ch(rng), h, w}, rng);
    auto b = random_tensor({2, ch(rng), h, w}, rng);
    const auto g = random_tensor(nn::concat_channels(a, b).shape(), rng);
    auto loss = [&] { return dot(nn::concat_channels(a, b).values(), g.values()); };
    Tensor4<double> da, db;
    nn::split_channels(g, a.shape().c, da, db);
    const auto na = numeric_gradient(a.values(), loss);
    const auto nb = numeric_gradient(b.values(), loss);
    r.add(relative_error(concat({da.values(), db.values()}), concat({na, nb})));
  }
  return r;
}

inline GradCheck check_masked_mae(int trials, std::mt19937_64& rng) {
  GradCheck r;
  std::uniform_int_distribution<int> ext(3, 8);
  std::uniform_real_distribution<double> height(1.0, 30.0), offset(0.01, 2.0);
  std::bernoulli_distribution labeled(0.3), sign(0.5);
  for (int t = 0; t < trials; ++t) {
    const int h = ext(rng), w = ext(rng), n = 2;
    GridSpec spec;
    spec.width = w;
    spec.height = h;
    std::vector<SparseLabelRaster> labels;
    Tensor4<double> pred({n, 1, h, w});
    std::uniform_real_distribution<double> free(0.0, 30.0);
    for (auto& v : pred.values()) v = free(rng);
    for (int i = 0; i < n; ++i) {
      std::vector<LabelEntry> entries;
      for (int row = 0; row < h; ++row)
        for (int col = 0; col < w; ++col) {
          if (!labeled(rng) && !(row == 0 && col == 0)) continue;
          const double y = height(rng);
          entries.push_back({row, col, static_cast<float>(y), 1.0f});
          // Stay clear of the |.| kink at pred == label.
          const double label = static_cast<float>(y);
          pred.at(i, 0, row, col) = label + (sign(rng) ? 1.0 : -1.0) * offset(rng);
        }
      labels.emplace_back(spec, std::move(entries));
    }
    const auto analytic = masked_mae<double>(pred, labels);
    auto loss = [&] { return masked_mae<double>(pred, labels).loss; };
    r.add(relative_error(analytic.grad.values(), numeric_gradient(pred.values(), loss)));
  }
  return r;
}

}  // namespace canopy::testing

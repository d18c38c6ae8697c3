#include "canopy/unet.hpp"

#include <cmath>
#include <random>

#include "canopy/error.hpp"

namespace canopy::nn {

std::string to_string(HeadKind head) {
  return head == HeadKind::Conv1x1 ? "conv1x1" : "conv2x2_stride2";
}

HeadKind parse_head(const std::string& text) {
  if (text == "conv1x1") return HeadKind::Conv1x1;
  if (text == "conv2x2_stride2") return HeadKind::Conv2x2Stride2;
  fail(ErrorCode::InvalidConfig, "unknown head '" + text + "' (expected conv1x1 or conv2x2_stride2)");
}

void UNetConfig::validate() const {
  require(in_channels >= 1 && in_channels <= 14, ErrorCode::InvalidConfig, "in_channels must be in 1..14");
  require(base_channels >= 1, ErrorCode::InvalidConfig, "base_channels must be >= 1");
  require(depth >= 1 && depth <= 8, ErrorCode::InvalidConfig, "depth must be in 1..8");
}

std::size_t ParamSpec::count() const {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::vector<int> encoder_channels(const UNetConfig& config) {
  std::vector<int> ch;
  for (int k = 0; k < config.depth; ++k) ch.push_back(config.base_channels << k);
  // Bilinear decoders keep the bottleneck at the width of the level above.
  ch.push_back(config.base_channels << (config.depth - 1));
  return ch;
}

namespace {

struct LayerPlan {
  std::string prefix;  // e.g. "enc0.conv1"
  ConvSpec conv;
  bool relu = true;
};

// Convolutions in execution order.
std::vector<LayerPlan> plan_layers(const UNetConfig& config) {
  config.validate();
  const auto ch = encoder_channels(config);
  std::vector<LayerPlan> plan;
  int in = config.in_channels;
  for (int k = 0; k <= config.depth; ++k) {
    const std::string p = "enc" + std::to_string(k);
    plan.push_back({p + ".conv1", conv3x3(in, ch[static_cast<std::size_t>(k)]), true});
    plan.push_back({p + ".conv2", conv3x3(ch[static_cast<std::size_t>(k)], ch[static_cast<std::size_t>(k)]), true});
    in = ch[static_cast<std::size_t>(k)];
  }
  int up = ch.back();
  for (int k = config.depth - 1; k >= 0; --k) {
    const int skip = ch[static_cast<std::size_t>(k)];
    const int cat = skip + up;
    const int mid = cat / 2;
    const int out = k > 0 ? skip / 2 : config.base_channels;
    const std::string p = "dec" + std::to_string(k);
    plan.push_back({p + ".conv1", conv3x3(cat, mid), true});
    plan.push_back({p + ".conv2", conv3x3(mid, out), true});
    up = out;
  }
  const ConvSpec head = config.head == HeadKind::Conv1x1 ? conv1x1(up, 1) : conv2x2_stride2(up, 1);
  plan.push_back({"head", head, false});
  return plan;
}

std::string norm_prefix(const std::string& conv_prefix) {
  // "enc0.conv1" -> "enc0.bn1"
  auto dot = conv_prefix.rfind(".conv");
  return conv_prefix.substr(0, dot) + ".bn" + conv_prefix.substr(dot + 5);
}

}  // namespace

std::vector<ParamSpec> enumerate_params(const UNetConfig& config) {
  std::vector<ParamSpec> specs;
  for (const auto& l : plan_layers(config)) {
    const auto& c = l.conv;
    specs.push_back({l.prefix + ".weight", {c.out_channels, c.in_channels, c.kernel, c.kernel}});
    if (config.use_batchnorm && l.relu) {
      const auto bn = norm_prefix(l.prefix);
      specs.push_back({bn + ".gamma", {c.out_channels}});
      specs.push_back({bn + ".beta", {c.out_channels}});
    } else {
      specs.push_back({l.prefix + ".bias", {c.out_channels}});
    }
  }
  return specs;
}

std::vector<ParamSpec> enumerate_buffers(const UNetConfig& config) {
  std::vector<ParamSpec> specs;
  if (!config.use_batchnorm) return specs;
  for (const auto& l : plan_layers(config)) {
    if (!l.relu) continue;
    const auto bn = norm_prefix(l.prefix);
    specs.push_back({bn + ".running_mean", {l.conv.out_channels}});
    specs.push_back({bn + ".running_var", {l.conv.out_channels}});
  }
  return specs;
}

std::int64_t param_count(const UNetConfig& config) {
  std::int64_t n = 0;
  for (const auto& p : enumerate_params(config)) n += static_cast<std::int64_t>(p.count());
  return n;
}

int receptive_radius(const UNetConfig& config) {
  config.validate();
  int r = 0;
  int scale = 1;
  for (int k = 0; k <= config.depth; ++k) {
    r += 2 * scale;  // two 3x3 convolutions
    if (k < config.depth) {
      r += scale;  // 2x2 pooling window
      scale *= 2;
    }
  }
  for (int k = config.depth - 1; k >= 0; --k) {
    r += scale;  // bilinear taps reach one coarse cell
    scale /= 2;
    r += 2 * scale;
  }
  if (config.head == HeadKind::Conv2x2Stride2) r += 1;
  return r;
}

Shape4 output_shape(const UNetConfig& config, const Shape4& input) {
  config.validate();
  const int m = config.size_multiple();
  require(input.c == config.in_channels, ErrorCode::ShapeError,
          "input has " + std::to_string(input.c) + " channels, model expects " + std::to_string(config.in_channels));
  require(input.h >= m && input.w >= m && input.h % m == 0 && input.w % m == 0, ErrorCode::ShapeError,
          "input spatial size " + std::to_string(input.h) + "x" + std::to_string(input.w) +
              " must be a positive multiple of " + std::to_string(m));
  const int s = config.output_stride();
  return {input.n, 1, input.h / s, input.w / s};
}

std::int64_t ModelState::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& p : params) n += static_cast<std::int64_t>(p.size());
  return n;
}

ModelState init_params(const UNetConfig& config, std::uint64_t seed) {
  ModelState state;
  state.config = config;
  std::mt19937_64 rng(seed);
  for (const auto& spec : enumerate_params(config)) {
    std::vector<float> values(spec.count(), 0.0f);
    if (spec.shape.size() == 4) {
      const double fan_in = static_cast<double>(spec.shape[1]) * spec.shape[2] * spec.shape[3];
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (auto& v : values) v = static_cast<float>(dist(rng));
    } else if (spec.name.ends_with(".gamma")) {
      std::fill(values.begin(), values.end(), 1.0f);
    }
    state.params.push_back(std::move(values));
    state.momentum.emplace_back(spec.count(), 0.0f);
  }
  for (const auto& spec : enumerate_buffers(config))
    state.buffers.emplace_back(spec.count(), spec.name.ends_with(".running_var") ? 1.0f : 0.0f);
  return state;
}

template <typename T>
UNet<T>::UNet(UNetConfig config) : config_(config) {
  int p = 0;
  int b = 0;
  for (const auto& l : plan_layers(config_)) {
    Unit u;
    u.conv = l.conv;
    u.relu = l.relu;
    u.weight = p++;
    if (config_.use_batchnorm && l.relu) {
      u.gamma = p++;
      u.beta = p++;
      u.running_mean = b++;
      u.running_var = b++;
    } else {
      u.bias = p++;
    }
    units_.push_back(u);
  }
}

template <typename T>
void UNet<T>::check_input(const Tensor4<T>& x) const {
  (void)output_shape(config_, x.shape());
}

template <typename T>
Tensor4<T> UNet<T>::apply_unit(const Unit& u, const ParamSet<T>& params, ParamSet<T>* buffers,
                               const Tensor4<T>& x, bool training, UnitCache* cache) const {
  const auto& w = params[static_cast<std::size_t>(u.weight)];
  std::span<const T> bias;
  if (u.bias >= 0) bias = params[static_cast<std::size_t>(u.bias)];
  Tensor4<T> y = conv2d_forward<T>(x, u.conv, w, bias);
  if (u.gamma >= 0) {
    const auto& g = params[static_cast<std::size_t>(u.gamma)];
    const auto& be = params[static_cast<std::size_t>(u.beta)];
    auto& rm = (*buffers)[static_cast<std::size_t>(u.running_mean)];
    auto& rv = (*buffers)[static_cast<std::size_t>(u.running_var)];
    if (training)
      y = batchnorm_forward_train<T>(y, g, be, rm, rv, cache ? &cache->bn : nullptr);
    else
      y = batchnorm_forward_eval<T>(y, g, be, rm, rv);
  }
  if (u.relu) relu_inplace(y);
  if (cache) {
    cache->input = x;
    cache->output = y;
  }
  return y;
}

template <typename T>
Tensor4<T> UNet<T>::run(const ParamSet<T>& params, ParamSet<T>* buffers, const Tensor4<T>& x, bool training,
                        Trace* trace) const {
  check_input(x);
  require(params.size() == enumerate_params(config_).size(), ErrorCode::ShapeError, "parameter set size mismatch");
  if (config_.use_batchnorm)
    require(buffers && buffers->size() == enumerate_buffers(config_).size(), ErrorCode::ShapeError,
            "batch-norm buffers missing");
  if (trace) {
    *trace = Trace{};
    trace->units.resize(units_.size());
  }
  std::size_t ui = 0;
  auto step = [&](const Tensor4<T>& in) {
    const auto i = ui++;
    return apply_unit(units_[i], params, buffers, in, training, trace ? &trace->units[i] : nullptr);
  };

  std::vector<Tensor4<T>> skips;
  Tensor4<T> h = x;
  for (int k = 0; k <= config_.depth; ++k) {
    h = step(h);
    h = step(h);
    if (k < config_.depth) {
      skips.push_back(h);
      auto pooled = maxpool2x2_forward(h);
      if (trace) {
        trace->pool_inputs.push_back(h.shape());
        trace->pool_argmax.push_back(std::move(pooled.argmax));
      }
      h = std::move(pooled.y);
    }
  }
  for (int k = config_.depth - 1; k >= 0; --k) {
    if (trace) trace->up_inputs.push_back(h.shape());
    auto up = bilinear_up2x_forward(h);
    const auto& skip = skips[static_cast<std::size_t>(k)];
    if (trace) trace->skip_channels.push_back(skip.shape().c);
    h = concat_channels(skip, up);
    h = step(h);
    h = step(h);
  }
  return step(h);
}

template <typename T>
Tensor4<T> UNet<T>::forward(const ParamSet<T>& params, const ParamSet<T>& buffers, const Tensor4<T>& x) const {
  auto buf = buffers;
  return run(params, &buf, x, false, nullptr);
}

template <typename T>
Tensor4<T> UNet<T>::forward_train(const ParamSet<T>& params, ParamSet<T>& buffers, const Tensor4<T>& x) {
  trace_.emplace();
  return run(params, &buffers, x, true, &*trace_);
}

template <typename T>
Tensor4<T> UNet<T>::unit_backward(const Unit& u, const ParamSet<T>& params, UnitCache& cache,
                                  const Tensor4<T>& dy, ParamSet<T>& grads, bool need_dx) const {
  Tensor4<T> d = u.relu ? relu_backward(cache.output, dy) : dy;
  if (u.gamma >= 0) {
    d = batchnorm_backward<T>(cache.bn, params[static_cast<std::size_t>(u.gamma)], d,
                              grads[static_cast<std::size_t>(u.gamma)], grads[static_cast<std::size_t>(u.beta)]);
  }
  Tensor4<T> dx;
  std::span<T> dbias;
  if (u.bias >= 0) dbias = grads[static_cast<std::size_t>(u.bias)];
  conv2d_backward<T>(cache.input, u.conv, params[static_cast<std::size_t>(u.weight)], d, need_dx ? &dx : nullptr,
                     grads[static_cast<std::size_t>(u.weight)], dbias);
  return dx;
}

template <typename T>
ParamSet<T> UNet<T>::backward(const ParamSet<T>& params, const Tensor4<T>& dy, Tensor4<T>* dx) {
  require(trace_.has_value(), ErrorCode::InvalidArgument, "backward called without forward_train");
  auto& tr = *trace_;
  ParamSet<T> grads;
  for (const auto& spec : enumerate_params(config_)) grads.emplace_back(spec.count(), T{0});

  auto ui = static_cast<int>(units_.size()) - 1;
  auto back = [&](const Tensor4<T>& g, bool need_dx = true) {
    const auto i = static_cast<std::size_t>(ui--);
    return unit_backward(units_[i], params, tr.units[i], g, grads, need_dx);
  };

  const int depth = config_.depth;
  std::vector<Tensor4<T>> skip_grads(static_cast<std::size_t>(depth));
  Tensor4<T> g = back(dy);
  // Decoder levels were run depth-1..0; walk them back 0..depth-1.
  for (int k = 0; k < depth; ++k) {
    g = back(g);
    g = back(g);
    const auto pos = static_cast<std::size_t>(depth - 1 - k);
    Tensor4<T> d_skip, d_up;
    split_channels(g, tr.skip_channels[pos], d_skip, d_up);
    skip_grads[static_cast<std::size_t>(k)] = std::move(d_skip);
    g = bilinear_up2x_backward(tr.up_inputs[pos], d_up);
  }
  for (int k = depth; k >= 0; --k) {
    g = back(g);
    g = back(g, k > 0 || dx != nullptr);
    if (k > 0) {
      const auto lvl = static_cast<std::size_t>(k - 1);
      g = maxpool2x2_backward(tr.pool_inputs[lvl], tr.pool_argmax[lvl], g);
      const auto& sg = skip_grads[lvl];
      for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += sg.data()[i];
    }
  }
  if (dx) *dx = std::move(g);
  trace_.reset();
  return grads;
}

template class UNet<float>;
template class UNet<double>;

}  // namespace canopy::nn

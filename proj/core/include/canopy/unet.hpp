#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "canopy/layers.hpp"
#include "canopy/tensor.hpp"

namespace canopy::nn {

enum class HeadKind {
  Conv1x1,         // output on the input grid
  Conv2x2Stride2,  // output at half resolution (20 m from 10 m inputs)
};

std::string to_string(HeadKind head);
HeadKind parse_head(const std::string& text);

struct UNetConfig {
  int in_channels = 14;
  int base_channels = 64;
  int depth = 4;
  HeadKind head = HeadKind::Conv1x1;
  bool use_batchnorm = false;

  void validate() const;
  // Spatial sizes must be multiples of this.
  int size_multiple() const { return 1 << depth; }
  // Output cells per input cell along one axis.
  int output_stride() const { return head == HeadKind::Conv2x2Stride2 ? 2 : 1; }
  bool operator==(const UNetConfig&) const = default;
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t count() const;
};

// Trainable tensors in their fixed enumeration order.
std::vector<ParamSpec> enumerate_params(const UNetConfig& config);
// Non-trainable batch-norm running statistics (empty without batch norm).
std::vector<ParamSpec> enumerate_buffers(const UNetConfig& config);
std::int64_t param_count(const UNetConfig& config);

// Feature channels produced by each encoder level (last entry = bottleneck).
std::vector<int> encoder_channels(const UNetConfig& config);
// Upper bound on how far (in input cells) a single input change can reach in
// the output; tiles overlapping by this much agree exactly in their interiors.
int receptive_radius(const UNetConfig& config);
Shape4 output_shape(const UNetConfig& config, const Shape4& input);

template <typename T>
using ParamSet = std::vector<std::vector<T>>;

struct ModelState {
  UNetConfig config;
  ParamSet<float> params;    // aligned with enumerate_params(config)
  ParamSet<float> buffers;   // aligned with enumerate_buffers(config)
  ParamSet<float> momentum;  // SGD velocity, aligned with params

  std::int64_t scalar_count() const;
  bool operator==(const ModelState&) const = default;
};

// He-normal kernels (std = sqrt(2 / fan_in)), zero biases, unit batch-norm
// scale. Deterministic per seed.
ModelState init_params(const UNetConfig& config, std::uint64_t seed);

template <typename To>
ParamSet<To> convert_params(const ParamSet<float>& params) {
  ParamSet<To> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out[i].assign(params[i].begin(), params[i].end());
  return out;
}

/// Encoder/decoder network with explicit backward pass. Parameters live
/// outside the object; the object only holds layer geometry and, after
/// forward_train, the activations needed by backward.
template <typename T>
class UNet {
 public:
  explicit UNet(UNetConfig config);

  const UNetConfig& config() const { return config_; }

  // Inference; batch norm (if enabled) uses running statistics.
  Tensor4<T> forward(const ParamSet<T>& params, const ParamSet<T>& buffers, const Tensor4<T>& x) const;

  // Training pass; batch norm uses batch statistics and updates `buffers`.
  Tensor4<T> forward_train(const ParamSet<T>& params, ParamSet<T>& buffers, const Tensor4<T>& x);

  // Gradients of the last forward_train output; optional input gradient.
  ParamSet<T> backward(const ParamSet<T>& params, const Tensor4<T>& dy, Tensor4<T>* dx = nullptr);

 private:
  struct Unit {
    ConvSpec conv;
    int weight = -1;
    int bias = -1;
    int gamma = -1;
    int beta = -1;
    int running_mean = -1;
    int running_var = -1;
    bool relu = true;
  };

  struct UnitCache {
    Tensor4<T> input;
    BatchNormCache<T> bn;
    Tensor4<T> output;
  };

  struct Trace {
    std::vector<UnitCache> units;  // one per Unit, same order
    std::vector<Shape4> pool_inputs;
    std::vector<std::vector<std::uint32_t>> pool_argmax;
    std::vector<Shape4> up_inputs;
    std::vector<int> skip_channels;
  };

  Tensor4<T> run(const ParamSet<T>& params, ParamSet<T>* buffers, const Tensor4<T>& x, bool training,
                 Trace* trace) const;
  Tensor4<T> apply_unit(const Unit& u, const ParamSet<T>& params, ParamSet<T>* buffers, const Tensor4<T>& x,
                        bool training, UnitCache* cache) const;
  Tensor4<T> unit_backward(const Unit& u, const ParamSet<T>& params, UnitCache& cache, const Tensor4<T>& dy,
                           ParamSet<T>& grads, bool need_dx) const;
  void check_input(const Tensor4<T>& x) const;

  UNetConfig config_;
  // Units in execution order: encoder levels 0..depth (two each), decoder
  // levels depth-1..0 (two each), head.
  std::vector<Unit> units_;
  std::optional<Trace> trace_;
};

extern template class UNet<float>;
extern template class UNet<double>;

}  // namespace canopy::nn

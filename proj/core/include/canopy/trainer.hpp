#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "canopy/raster.hpp"
#include "canopy/tensor.hpp"
#include "canopy/unet.hpp"

namespace canopy {

struct TrainConfig {
  int window_cells = 256;
  int batch_size = 30;
  int batches_per_epoch = 32;
  double momentum = 0.9;
  double lr_base = 1e-7;
  double lr_max = 0.1;
  std::int64_t lr_halfcycle_steps = 320;
  int max_epochs = 100;
  int early_stop_patience = 15;
  double early_stop_min_delta_m = 1e-3;
  std::uint64_t seed = 0;
  int scenario = 1;
  double label_fraction = 1.0;

  void validate(const nn::UNetConfig& model) const;
  bool operator==(const TrainConfig&) const = default;
};

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  bool operator==(const StepRecord&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  std::optional<double> val_mae;  // empty when there are no validation labels
  bool operator==(const EpochRecord&) const = default;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::uint64_t seed = 0;
  std::string config_hash;
  int best_epoch = -1;
  bool stopped_early = false;
  std::int64_t skipped_steps = 0;  // aborted on non-finite gradients
  double wall_clock_s = 0.0;       // informational only
};

// Writes `<dir>/train_steps.csv` (step,lr,train_loss) and
// `<dir>/val_epochs.csv` (epoch,val_mae).
void write_train_log(const TrainLog& log, const std::filesystem::path& dir);
TrainLog read_train_log(const std::filesystem::path& dir);

// Stable hex digest of the training and model configuration.
std::string config_hash(const TrainConfig& train, const nn::UNetConfig& model);

// Smith's triangular2 cyclic schedule.
double triangular2_lr(std::int64_t step, double base, double max, std::int64_t half_cycle);
inline double triangular2_lr(std::int64_t step, const TrainConfig& c) {
  return triangular2_lr(step, c.lr_base, c.lr_max, c.lr_halfcycle_steps);
}

template <typename T>
struct MaskedLoss {
  double loss = 0.0;
  std::size_t labeled = 0;
  nn::Tensor4<T> grad;
};

// Loss pooled over all labeled pixels of the batch; item i of `pred` is
// compared against labels[i]. Throws SkipBatch when nothing is labeled.
template <typename T>
MaskedLoss<T> masked_mae(const nn::Tensor4<T>& pred, std::span<const SparseLabelRaster> labels);

// v <- momentum * v + g; p <- p - lr * v. A non-finite gradient throws
// NonFiniteGradient and leaves the state untouched.
void sgd_momentum_step(nn::ModelState& state, const nn::ParamSet<float>& grads, double lr, double momentum = 0.9);

struct TrainTile {
  CellRect cells;  // input-grid cells of the tile
  std::int64_t footprint_count = 0;
};

struct WindowSample {
  RasterStack input;
  SparseLabelRaster labels;  // on the label grid (input grid / output stride)
  Cell origin;               // input grid
  int tile = -1;
  bool fallback = false;
};

inline constexpr int kWindowRetries = 100;

// Picks a tile with probability proportional to its footprint count, then a
// window inside it holding at least one label. `label_stride` is the number
// of input cells per label cell.
WindowSample sample_window(std::span<const TrainTile> tiles, const RasterStack& input,
                           const SparseLabelRaster& labels, int window_cells, int label_stride,
                           std::mt19937_64& rng);

struct TrainData {
  RasterStack input;
  SparseLabelRaster train_labels;
  SparseLabelRaster val_labels;
  std::vector<TrainTile> train_tiles;
  std::vector<CellRect> val_regions;  // input-grid cells predicted for validation
};

struct PredictOptions {
  int tile_cells = 256;
  int overlap_cells = -1;  // -1: the model's receptive radius
};

struct TrainResult {
  nn::ModelState best;  // lowest validation MAE (last state without validation)
  nn::ModelState last;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const nn::ModelState& initial, const TrainData& data, const TrainConfig& config,
                  const PredictOptions& predict = {}, const EpochCallback& on_epoch = {});

// Mean |pred - label| over labels whose pixel has a prediction.
std::optional<double> label_mae(const RasterStack& prediction, const SparseLabelRaster& labels);

// Dense prediction by overlapping tiles; only tile interiors are written.
// With `roi`, tiles whose interior misses every rectangle are skipped and
// their cells hold nodata. Output is on the model's output grid.
RasterStack predict_map(const nn::ModelState& model, const RasterStack& input, const PredictOptions& options = {},
                        std::span<const CellRect> roi = {});

// Effective overlap for `options` (validated / rounded to the output stride).
int resolve_overlap(const nn::UNetConfig& config, const PredictOptions& options);

}  // namespace canopy

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "canopy/evalkit.hpp"
#include "canopy/gedi.hpp"
#include "canopy/stereochm.hpp"
#include "canopy/synthscene.hpp"
#include "canopy/trainer.hpp"
#include "canopy/unet.hpp"

namespace canopy {

struct ChmSceneConfig {
  SceneConfig scene;
  PointCloudConfig cloud;
  ClothParams cloth;
  LaplaceOptions laplace;
  double fine_cell_m = 0.8;
  std::uint64_t seed = 0;
};

/// Everything the end-to-end pipeline needs besides per-run overrides.
struct ExperimentConfig {
  SceneConfig scene;
  FootprintConfig footprints;
  std::uint64_t band_seed = 1;
  std::uint64_t footprint_seed = 2;
  double tile_size_m = 1000.0;
  SplitFractions split;
  std::uint64_t split_seed = 3;
  nn::UNetConfig model;  // in_channels follows the scenario
  TrainConfig train;
  PredictOptions predict;
  ChmSceneConfig chm;
};

// Small scene and network sized for a single CPU core.
ExperimentConfig desk_config();

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path);
std::string experiment_hash(const ExperimentConfig& config);

/// Scene, bands, filtered footprints and the tile split.
struct PreparedScene {
  SceneTruth truth;
  RasterStack bands;  // all 14 bands
  std::vector<FootprintRecord> raw;
  FilterReport filter;
  std::vector<FootprintRecord> kept;
  std::vector<TileIndex> tiles;  // assignment filled in
  SplitAssignment split;
  // Forest-masked footprints per split: train, validation, test.
  std::array<std::vector<FootprintRecord>, 3> by_split;
};

PreparedScene prepare_scene(const ExperimentConfig& config);

// Model config for the run's scenario.
nn::UNetConfig run_model_config(const ExperimentConfig& config);
// Grid on which labels and predictions live for the run's output head.
GridSpec label_grid(const ExperimentConfig& config, const GridSpec& input_grid);

// Subsampled training labels (train.label_fraction, train.seed) plus
// validation labels and tile geometry.
TrainData build_train_data(const PreparedScene& scene, const ExperimentConfig& config);

// MAE of the noise-free band inverse against the validation labels.
double oracle_val_mae(const PreparedScene& scene, const ExperimentConfig& config);

struct RunOutcome {
  TrainResult trained;
  std::optional<double> best_val_mae;
  RasterStack test_prediction;  // 10 m grid
  FootprintEvaluation test;
};

RunOutcome run_experiment(const PreparedScene& scene, const ExperimentConfig& config);

// Map on the 10 m input grid (20 m heads are upsampled bilinearly).
RasterStack predict_on_input_grid(const nn::ModelState& model, const RasterStack& input,
                                  const PredictOptions& options, std::span<const CellRect> roi = {});

struct SweepRow {
  int scenario = 1;
  double label_fraction = 1.0;
  double jitter_sigma_m = 0.0;
  std::optional<MetricReport> test;  // empty if the run could not train
  std::vector<BinStats> bins;
  std::optional<double> best_val_mae;
  std::string note;
};

// Trains and evaluates one run per entry, writing logs, checkpoints and
// metrics under `out_dir` when it is non-empty.
std::vector<SweepRow> scenario_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir);
std::vector<SweepRow> subsample_sweep(const ExperimentConfig& config, std::span<const double> fractions,
                                      const std::filesystem::path& out_dir);

inline constexpr std::array<double, 4> kSubsampleFractions = {1.0, 0.1, 0.01, 0.001};

struct ChmOutcome {
  LabeledCloud cloud;
  ClothResult cloth;
  RasterStack dsm;
  DtmResult dtm;
  RasterStack chm_fine;
  RasterStack chm_10m;
};

// Runs the point-cloud chain on a cloud over `fine_grid`, aggregating to `coarse_grid`.
ChmOutcome run_chm_chain(const PointCloud& points, const GridSpec& fine_grid, const GridSpec& coarse_grid,
                         const ClothParams& cloth, const LaplaceOptions& laplace);
GridSpec fine_grid_for(const SceneConfig& scene, double fine_cell_m);

}  // namespace canopy

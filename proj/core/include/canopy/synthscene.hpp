#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "canopy/composite.hpp"
#include "canopy/gedi.hpp"
#include "canopy/raster.hpp"
#include "canopy/stereochm.hpp"

namespace canopy {

struct SceneConfig {
  std::uint64_t seed = 0;
  double extent_m = 6000.0;
  double cell_size_m = 10.0;
  double stand_min_m = 100.0;
  double stand_max_m = 400.0;
  double height_min_m = 0.0;
  double height_max_m = 30.0;
  double bare_fraction = 0.15;
  double texture_sigma_m = 0.5;  // per-pixel variation inside forest stands
  double s1_speckle_sigma = 0.08;  // log-normal multiplicative noise
  double s2_noise_sigma = 0.02;    // additive Gaussian noise
  double rh_floor_m = 2.25;
  double stand_snap_m = 0.0;  // stand edges snapped to this multiple (0: cell size)

  void validate() const;
  GridSpec grid() const;
  bool operator==(const SceneConfig&) const = default;
};

struct Stand {
  Polygon polygon;  // axis-aligned rectangle, counter-clockwise
  CellRect cells;
  double mean_height_m = 0.0;
  bool bare = false;
};

struct SceneTruth {
  RasterStack height;      // 1 band, meters
  RasterStack tree_cover;  // 1 band, 1 inside forest stands, 0 on bare stands
  std::vector<Stand> stands;
};

SceneTruth gen_scene(const SceneConfig& config);

/// Per-band response v = offset + amplitude * (1 - exp(-h / saturation_m)).
struct BandResponse {
  double offset = 0.0;
  double amplitude = 0.0;
  double saturation_m = 1.0;

  double value(double h) const;
  // Height producing `v`, clamped to the invertible range.
  double invert(double v) const;
};

// Responses in canonical band order (ten S2 bands, then four S1 bands).
const std::array<BandResponse, 14>& band_responses();

// Noise-free band values for a height raster.
RasterStack noiseless_bands(const RasterStack& height);

// Normalized 14-band stack with per-family noise, clamped to [0, 1].
RasterStack forward_bands(const SceneTruth& truth, const SceneConfig& config, std::uint64_t seed);

struct TimeSeriesConfig {
  int s1_epochs = 12;
  int s2_epochs = 10;
  double cloud_fraction = 0.3;  // S2 observations masked per pixel
};

// Raw-unit (dB / DN) acquisitions whose median composites reproduce
// forward_bands statistics. Returns the S1 and S2 series.
std::pair<TimeSeriesStack, TimeSeriesStack> forward_timeseries(const SceneTruth& truth, const SceneConfig& config,
                                                               const TimeSeriesConfig& ts, std::uint64_t seed);

// Per-pixel inverse of the noise-free band model (least-saturated band).
RasterStack invert_bands(const RasterStack& bands);

struct FootprintConfig {
  double spacing_along_m = 60.0;
  double spacing_across_m = 600.0;
  double jitter_sigma_m = 10.0;
  double invalid_fraction = 0.0;
  double footprint_diameter_m = 25.0;
  bool operator==(const FootprintConfig&) const = default;
};

// Tracks run north-south. The record location is jittered; RH95 is read at
// the true location. Invalid records get exactly one filter defect.
std::vector<FootprintRecord> sample_footprints(const SceneTruth& truth, const SceneConfig& scene,
                                               const FootprintConfig& config, std::uint64_t seed);

struct PointCloudConfig {
  double density_pts_per_m2 = 4.0;
  double vertical_noise_m = 0.05;
  double understory_ground_fraction = 0.1;  // canopy-area points that reach the ground
};

struct LabeledCloud {
  PointCloud points;
  std::vector<PointClass> truth;  // generator labels
};

using TerrainFn = std::function<double(double x_m, double y_m)>;

LabeledCloud gen_pointcloud(const SceneTruth& truth, const TerrainFn& terrain, const PointCloudConfig& config,
                            std::uint64_t seed);

}  // namespace canopy

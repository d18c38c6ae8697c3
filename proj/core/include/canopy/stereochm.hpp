#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "canopy/raster.hpp"

namespace canopy {

struct PointXYZ {
  double x_m = 0.0;
  double y_m = 0.0;
  double z_m = 0.0;
  bool operator==(const PointXYZ&) const = default;
};

using PointCloud = std::vector<PointXYZ>;

// Point cloud CSV with header x_m,y_m,z_m.
PointCloud read_point_cloud_csv(const std::filesystem::path& path);
void write_point_cloud_csv(std::span<const PointXYZ> points, const std::filesystem::path& path);

// Max z per cell; cells without points hold nodata. Points off the grid are ignored.
RasterStack rasterize_dsm(std::span<const PointXYZ> points, const GridSpec& spec);

struct ClothParams {
  double cloth_cell_m = 2.0;
  int rigidness = 3;              // constraint passes per step
  double gravity_step_m = 0.1;    // downward displacement per step
  int max_steps = 500;
  double epsilon_m = 1e-3;        // convergence: max particle displacement
  double classification_threshold_m = 0.5;
  double initial_clearance_m = 1.0;

  void validate() const;
};

enum class PointClass { Ground, NonGround };

struct ClothResult {
  std::vector<PointClass> labels;  // one per input point
  bool converged = false;
  int steps = 0;
  GridSpec cloth_grid;   // particle nodes sit at cell centers
  std::vector<double> cloth_z;  // final cloth heights, original z orientation
};

// Drapes a cloth over the upside-down cloud; points close to it are ground.
ClothResult cloth_ground_filter(std::span<const PointXYZ> points, const ClothParams& params = {});

struct LaplaceOptions {
  double tolerance_m = 1e-4;  // max |z - mean of neighbours| at free cells
  int max_sweeps = 20000;
};

struct DtmResult {
  RasterStack dtm;
  double residual_m = 0.0;
  int sweeps = 0;
  bool converged = false;
};

// Cells holding ground points are fixed to their mean z; all other cells
// solve the discrete Laplace equation with zero-flux edges.
DtmResult laplace_dtm(std::span<const PointXYZ> ground, const GridSpec& spec, const LaplaceOptions& options = {});

// dsm - dtm clamped at 0; nodata in either input propagates.
RasterStack chm(const RasterStack& dsm, const RasterStack& dtm);

// Top-of-canopy aggregation onto a coarser grid (max of contained centers).
RasterStack chm_to_grid(const RasterStack& fine_chm, const GridSpec& target);

}  // namespace canopy

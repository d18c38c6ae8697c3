#include "canopy/synthscene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "canopy/error.hpp"

namespace canopy {

void SceneConfig::validate() const {
  require(extent_m > 0.0 && cell_size_m > 0.0, ErrorCode::InvalidConfig, "extent and cell size must be positive");
  require(stand_min_m > 0.0 && stand_min_m < stand_max_m, ErrorCode::InvalidConfig,
          "stand size range must be non-degenerate");
  require(height_min_m >= 0.0 && height_min_m < height_max_m, ErrorCode::InvalidConfig,
          "height range must be non-degenerate");
  require(bare_fraction >= 0.0 && bare_fraction <= 1.0, ErrorCode::InvalidConfig, "bare_fraction must be in [0, 1]");
  require(texture_sigma_m >= 0.0 && s1_speckle_sigma >= 0.0 && s2_noise_sigma >= 0.0, ErrorCode::InvalidConfig,
          "noise levels must be non-negative");
  require(rh_floor_m >= 0.0, ErrorCode::InvalidConfig, "rh_floor_m must be non-negative");
  require(stand_snap_m >= 0.0, ErrorCode::InvalidConfig, "stand_snap_m must be non-negative");
  const double cells = extent_m / cell_size_m;
  require(std::abs(cells - std::round(cells)) < 1e-9, ErrorCode::InvalidConfig,
          "extent must be a whole number of cells");
}

GridSpec SceneConfig::grid() const {
  GridSpec g;
  g.origin_x_m = 0.0;
  g.origin_y_m = extent_m;
  g.cell_size_m = cell_size_m;
  g.width = g.height = static_cast<int>(std::lround(extent_m / cell_size_m));
  g.validate();
  return g;
}

namespace {

// Cut [0, extent) into pieces with lengths drawn from [lo, hi], edges snapped.
std::vector<double> cut_axis(double extent, double lo, double hi, double snap, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> len(lo, hi);
  std::vector<double> edges{0.0};
  while (edges.back() < extent) {
    const double from = edges.back();
    double to = std::round((from + len(rng)) / snap) * snap;
    to = std::max(to, from + snap);
    if (extent - to < lo - 1e-9) to = extent;
    edges.push_back(std::min(to, extent));
  }
  return edges;
}

std::uint64_t stream(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer: decorrelates sub-streams of one seed.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

SceneTruth gen_scene(const SceneConfig& config) {
  config.validate();
  const auto grid = config.grid();
  const double snap = config.stand_snap_m > 0.0 ? config.stand_snap_m : config.cell_size_m;
  std::mt19937_64 layout(stream(config.seed, 0));
  std::mt19937_64 texture(stream(config.seed, 1));

  SceneTruth truth;
  truth.height = RasterStack(grid, {"height_m"});
  truth.tree_cover = RasterStack(grid, {"tree_cover"});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> height(config.height_min_m, config.height_max_m);
  std::normal_distribution<double> noise(0.0, 1.0);

  const auto rows = cut_axis(config.extent_m, config.stand_min_m, config.stand_max_m, snap, layout);
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto cols = cut_axis(config.extent_m, config.stand_min_m, config.stand_max_m, snap, layout);
    for (std::size_t j = 0; j + 1 < cols.size(); ++j) {
      Stand s;
      const double x0 = cols[j], x1 = cols[j + 1];
      const double y_top = config.extent_m - rows[i], y_bot = config.extent_m - rows[i + 1];
      s.polygon = {{x0, y_bot}, {x1, y_bot}, {x1, y_top}, {x0, y_top}};
      const int r0 = static_cast<int>(std::lround(rows[i] / config.cell_size_m));
      const int r1 = static_cast<int>(std::lround(rows[i + 1] / config.cell_size_m));
      const int c0 = static_cast<int>(std::lround(x0 / config.cell_size_m));
      const int c1 = static_cast<int>(std::lround(x1 / config.cell_size_m));
      s.cells = {r0, c0, r1 - r0, c1 - c0};
      s.bare = unit(layout) < config.bare_fraction;
      s.mean_height_m = s.bare ? 0.0 : height(layout);
      truth.stands.push_back(s);
    }
  }
  for (const auto& s : truth.stands) {
    for (int r = s.cells.row; r < s.cells.row + s.cells.rows; ++r) {
      for (int c = s.cells.col; c < s.cells.col + s.cells.cols; ++c) {
        double h = s.mean_height_m;
        if (!s.bare && config.texture_sigma_m > 0.0)
          h = std::clamp(h + config.texture_sigma_m * noise(texture), config.height_min_m, config.height_max_m);
        truth.height.at(0, r, c) = static_cast<float>(h);
        truth.tree_cover.at(0, r, c) = s.bare ? 0.0f : 1.0f;
      }
    }
  }
  return truth;
}

double BandResponse::value(double h) const { return offset + amplitude * (1.0 - std::exp(-h / saturation_m)); }

double BandResponse::invert(double v) const {
  const double u = std::clamp((v - offset) / amplitude, 0.0, 1.0 - 1e-12);
  return -saturation_m * std::log1p(-u);
}

const std::array<BandResponse, 14>& band_responses() {
  // B8 and VV_des saturate within a few meters; the rest stay informative
  // across the whole height range.
  static const std::array<BandResponse, 14> kResponses = {{
      {0.30, -0.20, 8.0},   // B2
      {0.35, -0.22, 10.0},  // B3
      {0.32, -0.24, 7.0},   // B4
      {0.40, -0.20, 14.0},  // B5
      {0.30, 0.30, 18.0},   // B6
      {0.30, 0.35, 22.0},   // B7
      {0.35, 0.40, 2.5},    // B8
      {0.30, 0.35, 25.0},   // B8A
      {0.55, -0.30, 16.0},  // B11
      {0.50, -0.32, 12.0},  // B12
      {0.35, 0.30, 20.0},   // VV_asc
      {0.25, 0.35, 15.0},   // VH_asc
      {0.35, 0.35, 2.5},    // VV_des
      {0.25, 0.35, 12.0},   // VH_des
  }};
  return kResponses;
}

RasterStack noiseless_bands(const RasterStack& height) {
  require(height.band_count() == 1, ErrorCode::InvalidArgument, "height raster must have one band");
  RasterStack out(height.spec(), canonical_band_names());
  const auto& resp = band_responses();
  const auto h = height.band(0);
  for (int b = 0; b < 14; ++b) {
    auto dst = out.band(b);
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<float>(std::clamp(resp[static_cast<std::size_t>(b)].value(h[i]), 0.0, 1.0));
  }
  return out;
}

RasterStack forward_bands(const SceneTruth& truth, const SceneConfig& config, std::uint64_t seed) {
  auto out = noiseless_bands(truth.height);
  for (int b = 0; b < 14; ++b) {
    const bool s1 = b >= 10;
    const double sigma = s1 ? config.s1_speckle_sigma : config.s2_noise_sigma;
    if (sigma == 0.0) continue;
    std::mt19937_64 rng(stream(seed, 100 + static_cast<std::uint64_t>(b)));
    std::normal_distribution<double> z(0.0, 1.0);
    for (auto& v : out.band(b)) {
      const double n = z(rng);
      const double noisy = s1 ? v * std::exp(sigma * n) : v + sigma * n;
      v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
  }
  return out;
}

std::pair<TimeSeriesStack, TimeSeriesStack> forward_timeseries(const SceneTruth& truth, const SceneConfig& config,
                                                               const TimeSeriesConfig& ts, std::uint64_t seed) {
  require(ts.s1_epochs >= 1 && ts.s2_epochs >= 1, ErrorCode::InvalidConfig, "need at least one epoch per family");
  require(ts.cloud_fraction >= 0.0 && ts.cloud_fraction < 1.0, ErrorCode::InvalidConfig,
          "cloud_fraction must be in [0, 1)");
  const auto clean = noiseless_bands(truth.height);
  const auto& spec = clean.spec();
  const auto cells = static_cast<std::size_t>(spec.cell_count());
  // Scale per-epoch noise so the median of the valid looks has the
  // configured spread (sd of a normal median is about 1.2533 sigma / sqrt(n)).
  const double s1_sigma = config.s1_speckle_sigma * std::sqrt(ts.s1_epochs) / 1.2533;
  const double s2_sigma =
      config.s2_noise_sigma * std::sqrt(ts.s2_epochs * (1.0 - ts.cloud_fraction)) / 1.2533;

  auto make = [&](bool s1, int epochs, std::uint64_t tag) {
    TimeSeriesStack series;
    series.spec = spec;
    const int first = s1 ? 10 : 0;
    const int count = s1 ? 4 : 10;
    for (int b = first; b < first + count; ++b) series.band_names.push_back(clean.band_names()[static_cast<std::size_t>(b)]);
    std::mt19937_64 rng(stream(seed, tag));
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int e = 0; e < epochs; ++e) {
      Epoch ep;
      ep.timestamp = 1577836800 + static_cast<std::int64_t>(e) * 12 * 86400;  // 2020-01-01, 12-day revisit
      ep.values.resize(cells * static_cast<std::size_t>(count));
      ep.valid.assign(cells, 1);
      if (!s1)
        for (auto& v : ep.valid) v = u(rng) < ts.cloud_fraction ? 0 : 1;
      for (int k = 0; k < count; ++k) {
        const auto src = clean.band(first + k);
        for (std::size_t i = 0; i < cells; ++i) {
          float& dst = ep.values[static_cast<std::size_t>(k) * cells + i];
          if (s1) {
            const double v = src[i] * std::exp(s1_sigma * z(rng));
            dst = static_cast<float>(v * 30.0 - 30.0);
          } else if (ep.valid[i]) {
            dst = static_cast<float>((src[i] + s2_sigma * z(rng)) * 5000.0);
          } else {
            dst = 8000.0f;  // cloud
          }
        }
      }
      series.epochs.push_back(std::move(ep));
    }
    return series;
  };
  return {make(true, ts.s1_epochs, 200), make(false, ts.s2_epochs, 201)};
}

RasterStack invert_bands(const RasterStack& bands) {
  const auto& resp = band_responses();
  std::size_t best = 0;
  for (std::size_t b = 1; b < resp.size(); ++b)
    if (resp[b].saturation_m > resp[best].saturation_m) best = b;
  const auto idx = bands.band_index(canonical_band_names()[best]);
  require(idx.has_value(), ErrorCode::MissingBand, "inverse needs band " + canonical_band_names()[best]);
  RasterStack out(bands.spec(), {"height_m"}, bands.nodata());
  const auto src = bands.band(*idx);
  auto dst = out.band(0);
  for (std::size_t i = 0; i < dst.size(); ++i)
    dst[i] = bands.is_nodata(src[i]) ? out.nodata() : static_cast<float>(resp[best].invert(src[i]));
  return out;
}

std::vector<FootprintRecord> sample_footprints(const SceneTruth& truth, const SceneConfig& scene,
                                               const FootprintConfig& config, std::uint64_t seed) {
  require(config.jitter_sigma_m >= 0.0, ErrorCode::InvalidConfig, "jitter_sigma_m must be >= 0");
  require(config.spacing_along_m > 0.0 && config.spacing_across_m > 0.0, ErrorCode::InvalidConfig,
          "footprint spacings must be positive");
  require(config.invalid_fraction >= 0.0 && config.invalid_fraction <= 1.0, ErrorCode::InvalidConfig,
          "invalid_fraction must be in [0, 1]");
  const auto& spec = truth.height.spec();
  const auto bounds = spec.bounds();
  std::mt19937_64 fields(stream(seed, 300));
  std::mt19937_64 jitter(stream(seed, 301));
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<FootprintRecord> out;
  std::int64_t id = 1;
  for (double x = bounds.min_x + 0.5 * config.spacing_across_m; x < bounds.max_x; x += config.spacing_across_m) {
    for (double y = bounds.max_y - 0.5 * config.spacing_along_m; y > bounds.min_y; y -= config.spacing_along_m) {
      FootprintRecord f;
      f.id = id++;
      const Point true_loc{x, y};
      double top = 0.0;
      for (const auto& c : circle_pixels(spec, true_loc, config.footprint_diameter_m))
        top = std::max(top, static_cast<double>(truth.height.at(0, c.row, c.col)));
      const double rh95 = std::max(top, scene.rh_floor_m);
      const double jx = z(jitter), jy = z(jitter);
      f.x_m = x + config.jitter_sigma_m * jx;
      f.y_m = y + config.jitter_sigma_m * jy;
      f.acquired_at = "2020-06-01T00:00:00Z";
      f.rh95_m = rh95;
      f.rh100_m = rh95 + 1.5 * u(fields);
      f.quality_flag = 1;
      f.toploc = 100.0 + 50.0 * u(fields);
      f.botloc = *f.toploc + 10.0 + rh95 / 0.15;
      f.num_detectedmodes = 1.0 + std::floor(4.0 * u(fields));
      f.noise_std = 1.0 + 2.0 * u(fields);
      f.max_amplitude = *f.noise_std * (40.0 + 160.0 * u(fields));
      f.selected_algorithm = 2;
      const double defect = u(fields);
      const double kind = u(fields);
      if (defect < config.invalid_fraction) {
        switch (static_cast<int>(kind * 6.0)) {
          case 0: f.quality_flag = 0; break;
          case 1: f.toploc.reset(); break;
          case 2: f.botloc.reset(); break;
          case 3: f.num_detectedmodes.reset(); break;
          case 4: f.rh100_m.reset(); break;
          default: f.max_amplitude = *f.noise_std * (5.0 + 24.0 * kind); break;
        }
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

LabeledCloud gen_pointcloud(const SceneTruth& truth, const TerrainFn& terrain, const PointCloudConfig& config,
                            std::uint64_t seed) {
  require(config.density_pts_per_m2 > 0.0, ErrorCode::InvalidConfig, "point density must be positive");
  require(config.understory_ground_fraction >= 0.0 && config.understory_ground_fraction <= 1.0,
          ErrorCode::InvalidConfig, "understory_ground_fraction must be in [0, 1]");
  const auto& spec = truth.height.spec();
  const auto b = spec.bounds();
  const auto n = static_cast<std::size_t>(std::llround(config.density_pts_per_m2 * b.width() * b.height()));
  std::mt19937_64 rng(stream(seed, 400));
  std::uniform_real_distribution<double> ux(b.min_x, b.max_x), uy(b.min_y, b.max_y), u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, config.vertical_noise_m);

  LabeledCloud cloud;
  cloud.points.reserve(n);
  cloud.truth.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng), y = uy(rng);
    const double noise = z(rng);
    const double under = u(rng);
    const auto cell = spec.cell_of({x, y});
    const double h = cell ? truth.height.at(0, cell->row, cell->col) : 0.0;
    const double ground = terrain ? terrain(x, y) : 0.0;
    const bool canopy = h > 0.0 && under >= config.understory_ground_fraction;
    cloud.points.push_back({x, y, ground + (canopy ? h : 0.0) + noise});
    cloud.truth.push_back(canopy ? PointClass::NonGround : PointClass::Ground);
  }
  return cloud;
}

}  // namespace canopy

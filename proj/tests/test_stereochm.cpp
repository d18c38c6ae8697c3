#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "canopy/parallel.hpp"
#include "canopy/stereochm.hpp"
#include "support/expect_error.hpp"

using namespace canopy;

namespace {

GridSpec grid(int w, int h, double cell = 1.0, double x0 = 0.0, double y0 = 0.0) {
  GridSpec g;
  g.origin_x_m = x0;
  g.origin_y_m = y0 + h * cell;
  g.cell_size_m = cell;
  g.width = w;
  g.height = h;
  return g;
}

// Regular jittered samples over [0, extent)^2 with z from `surface`.
template <typename F>
PointCloud sample_surface(double extent, double spacing, F surface, std::uint64_t seed, double noise = 0.02) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> j(0.0, spacing);
  std::normal_distribution<double> dz(0.0, noise);
  PointCloud pts;
  for (double y = 0; y < extent; y += spacing)
    for (double x = 0; x < extent; x += spacing) {
      const double px = x + j(rng), py = y + j(rng);
      pts.push_back({px, py, surface(px, py) + dz(rng)});
    }
  return pts;
}

bool on_block(double x, double y) { return x >= 35 && x < 65 && y >= 35 && y < 65; }

double block_scene(double x, double y) { return on_block(x, y) ? 15.0 : 0.0; }

}  // namespace

TEST(Dsm, MaxPerCell) {
  const auto g = grid(4, 4);
  const PointCloud one = {{1.5, 2.5, 3.0}};
  const auto d = rasterize_dsm(one, g);
  int filled = 0;
  for (float v : d.values()) filled += !d.is_nodata(v);
  EXPECT_EQ(filled, 1);
  EXPECT_EQ(d.at(0, 1, 1), 3.0f);
  const PointCloud two = {{0.2, 0.2, 5.0}, {0.8, 0.7, 7.0}, {50.0, 50.0, 99.0}};
  EXPECT_EQ(rasterize_dsm(two, g).at(0, 3, 0), 7.0f);
  EXPECT_CANOPY_ERROR(rasterize_dsm(PointCloud{}, g), ErrorCode::EmptyCloud);
}

TEST(Dsm, DenseFlatCloud) {
  const auto pts = sample_surface(20.0, 0.25, [](double, double) { return 10.0; }, 1, 0.0);
  const auto d = rasterize_dsm(pts, grid(20, 20));
  for (float v : d.values()) EXPECT_FLOAT_EQ(v, 10.0f);
}

TEST(Cloth, FlatCloudIsAllGround) {
  const auto pts = sample_surface(60.0, 0.5, [](double, double) { return 3.0; }, 2);
  const auto r = cloth_ground_filter(pts);
  EXPECT_TRUE(r.converged);
  EXPECT_TRUE(std::all_of(r.labels.begin(), r.labels.end(), [](PointClass c) { return c == PointClass::Ground; }));
}

TEST(Cloth, RaisedBlockAndOutlier) {
  auto pts = sample_surface(100.0, 0.5, block_scene, 3);
  pts.push_back({20.25, 20.25, 50.0});
  const auto r = cloth_ground_filter(pts);
  std::size_t plane = 0, plane_hit = 0, top = 0, top_miss = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (on_block(pts[i].x_m, pts[i].y_m)) {
      ++top;
      top_miss += r.labels[i] == PointClass::Ground;
    } else {
      ++plane;
      plane_hit += r.labels[i] == PointClass::Ground;
    }
  }
  EXPECT_EQ(top_miss, 0u) << "of " << top;
  EXPECT_GE(static_cast<double>(plane_hit) / plane, 0.99);
  EXPECT_EQ(r.labels.back(), PointClass::NonGround);
}

TEST(Cloth, TranslationInvariant) {
  const auto pts = sample_surface(100.0, 0.7, block_scene, 4);
  auto moved = pts;
  for (auto& p : moved) {
    p.x_m += 1234.5;
    p.y_m -= 678.25;
    p.z_m += 100.0;
  }
  EXPECT_EQ(cloth_ground_filter(pts).labels, cloth_ground_filter(moved).labels);
}

TEST(Cloth, ThreadCountDoesNotChangeResult) {
  const auto pts = sample_surface(100.0, 0.7, block_scene, 5);
  set_num_threads(1);
  const auto a = cloth_ground_filter(pts);
  set_num_threads(3);
  const auto b = cloth_ground_filter(pts);
  set_num_threads(1);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.cloth_z, b.cloth_z);
  EXPECT_EQ(a.steps, b.steps);
}

TEST(Cloth, StepLimitReportsNonConvergence) {
  ClothParams p;
  p.max_steps = 2;
  const auto r = cloth_ground_filter(sample_surface(30.0, 0.5, block_scene, 6), p);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.steps, 2);
  EXPECT_EQ(r.labels.size(), sample_surface(30.0, 0.5, block_scene, 6).size());
  p.cloth_cell_m = 0.0;
  EXPECT_CANOPY_ERROR(p.validate(), ErrorCode::InvalidConfig);
}

TEST(Laplace, ConstantConstraints) {
  const PointCloud pts = {{2.5, 2.5, 7.0}, {17.5, 3.5, 7.0}, {9.5, 16.5, 7.0}};
  const auto r = laplace_dtm(pts, grid(20, 20));
  EXPECT_TRUE(r.converged);
  for (float v : r.dtm.values()) EXPECT_NEAR(v, 7.0, 1e-4);
}

TEST(Laplace, PlaneIsReproduced) {
  // A plane is harmonic, so boundary samples pin it down exactly.
  const int n = 30;
  const auto g = grid(n, n);
  auto plane = [](double x, double y) { return 0.3 * x - 0.2 * y + 4.0; };
  PointCloud pts;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (r != 0 && c != 0 && r != n - 1 && c != n - 1 && (r % 7 || c % 7)) continue;
      const double x = c + 0.5, y = n - r - 0.5;
      pts.push_back({x, y, plane(x, y)});
    }
  LaplaceOptions opt;
  opt.tolerance_m = 1e-7;
  const auto d = laplace_dtm(pts, g, opt);
  EXPECT_TRUE(d.converged);
  double worst = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) worst = std::max(worst, std::abs(d.dtm.at(0, r, c) - plane(c + 0.5, n - r - 0.5)));
  EXPECT_LT(worst, 1e-3);
}

TEST(Laplace, HarmonicResidualAndMaximumPrinciple) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0.0, 25.0), z(-3.0, 9.0);
  PointCloud pts;
  for (int i = 0; i < 15; ++i) pts.push_back({pos(rng), pos(rng), z(rng)});
  const auto g = grid(25, 25);
  const auto d = laplace_dtm(pts, g);
  ASSERT_TRUE(d.converged);
  std::vector<bool> fixed(625, false);
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const auto& p : pts) {
    const auto c = g.cell_of({p.x_m, p.y_m});
    fixed[static_cast<std::size_t>(c->row * 25 + c->col)] = true;
    lo = std::min(lo, p.z_m);
    hi = std::max(hi, p.z_m);
  }
  for (int r = 1; r < 24; ++r)
    for (int c = 1; c < 24; ++c) {
      const float v = d.dtm.at(0, r, c);
      EXPECT_GE(v, lo - 1e-6);
      EXPECT_LE(v, hi + 1e-6);
      if (fixed[static_cast<std::size_t>(r * 25 + c)]) continue;
      const double mean =
          (d.dtm.at(0, r - 1, c) + d.dtm.at(0, r + 1, c) + d.dtm.at(0, r, c - 1) + d.dtm.at(0, r, c + 1)) / 4.0;
      EXPECT_NEAR(v, mean, 1e-4 + 1e-5);
    }
  EXPECT_CANOPY_ERROR(laplace_dtm(PointCloud{}, g), ErrorCode::EmptyConstraints);
}

TEST(Chm, Differencing) {
  const auto g = grid(3, 1);
  RasterStack dtm(g, {"z"}, {1.0f, 2.0f, 3.0f});
  EXPECT_EQ(chm(dtm, dtm).values()[1], 0.0f);
  RasterStack dsm(g, {"z"}, {13.0f, 1.0f, kDefaultNodata});
  const auto c = chm(dsm, dtm);
  EXPECT_EQ(c.at(0, 0, 0), 12.0f);
  EXPECT_EQ(c.at(0, 0, 1), 0.0f);
  EXPECT_TRUE(c.is_nodata(c.at(0, 0, 2)));
  RasterStack other(grid(3, 1, 2.0), {"z"});
  EXPECT_CANOPY_ERROR(chm(other, dtm), ErrorCode::GridMismatch);
}

TEST(Chm, GroundOnlySceneStaysNearZero) {
  const auto pts = sample_surface(40.0, 0.4, [](double x, double y) { return 0.05 * x + 0.02 * y; }, 8, 0.05);
  const auto labels = cloth_ground_filter(pts).labels;
  PointCloud ground;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (labels[i] == PointClass::Ground) ground.push_back(pts[i]);
  const auto g = grid(50, 50, 0.8);
  const auto c = chm(rasterize_dsm(pts, g), laplace_dtm(ground, g).dtm);
  for (float v : c.values())
    if (!c.is_nodata(v)) EXPECT_LE(v, ClothParams{}.classification_threshold_m + 1e-4);
}

TEST(ChmToGrid, MaxAggregation) {
  RasterStack fine(grid(25, 25, 0.8), {"h"});
  std::fill(fine.values().begin(), fine.values().end(), 4.0f);
  const auto coarse_grid = grid(2, 2, 10.0);
  const auto flat = chm_to_grid(fine, coarse_grid);
  for (float v : flat.values()) EXPECT_EQ(v, 4.0f);
  std::fill(fine.values().begin(), fine.values().end(), 0.0f);
  fine.at(0, 20, 3) = 20.0f;  // center (2.8, 3.6): lower-left coarse cell
  const auto c = chm_to_grid(fine, coarse_grid);
  EXPECT_EQ(c.at(0, 1, 0), 20.0f);
  EXPECT_EQ(c.at(0, 0, 0), 0.0f);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(0.0f, 30.0f);
  for (auto& v : fine.values()) v = u(rng);
  const auto agg = chm_to_grid(fine, coarse_grid);
  for (int R = 0; R < 2; ++R)
    for (int C = 0; C < 2; ++C) {
      float best = -1.0f;
      for (int r = 0; r < 25; ++r)
        for (int col = 0; col < 25; ++col) {
          const double x = (col + 0.5) * 0.8, y = 20.0 - (r + 0.5) * 0.8;
          if (x >= C * 10.0 && x < (C + 1) * 10.0 && y <= 20.0 - R * 10.0 && y > 20.0 - (R + 1) * 10.0)
            best = std::max(best, fine.at(0, r, col));
        }
      EXPECT_EQ(agg.at(0, R, C), best);
    }
}

TEST(PointCloudIo, RoundTrip) {
  const PointCloud pts = {{0.1, 2.0 / 3.0, -5.5}, {1e6, -1e-3, 12.0}};
  const auto path = std::filesystem::temp_directory_path() / "canopy_test_cloud.csv";
  write_point_cloud_csv(pts, path);
  EXPECT_EQ(read_point_cloud_csv(path), pts);
  std::filesystem::remove(path);
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "canopy/evalkit.hpp"
#include "support/expect_error.hpp"

using namespace canopy;

namespace {

std::vector<PairedSample> pairs(const std::vector<double>& pred, const std::vector<double>& ref) {
  std::vector<PairedSample> s;
  for (std::size_t i = 0; i < pred.size(); ++i) s.push_back({pred[i], ref[i], "", false});
  return s;
}

std::vector<PairedSample> random_pairs(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> h(0.0, 35.0), e(-4.0, 4.0), scale(0.5, 1.5);
  const double k = scale(rng);
  std::vector<PairedSample> s;
  for (int i = 0; i < n; ++i) {
    const double r = h(rng);
    s.push_back({k * r + e(rng), r, "", false});
  }
  return s;
}

// Mean squared difference computed directly.
double msd(const std::vector<PairedSample>& s) {
  double acc = 0.0;
  for (const auto& p : s) acc += (p.predicted_m - p.reference_m) * (p.predicted_m - p.reference_m);
  return acc / static_cast<double>(s.size());
}

GridSpec grid(int w, int h) {
  GridSpec g;
  g.width = w;
  g.height = h;
  g.origin_y_m = h * g.cell_size_m;
  return g;
}

RasterStack random_map(std::mt19937_64& rng, int w, int h) {
  std::uniform_real_distribution<float> u(0.0f, 30.0f);
  RasterStack m(grid(w, h), {"h"});
  for (auto& v : m.values()) v = u(rng);
  return m;
}

}  // namespace

TEST(Metrics, PerfectPrediction) {
  const auto m = metrics(pairs({1, 5, 9}, {1, 5, 9}));
  EXPECT_EQ(m.n, 3u);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.me, 0.0);
  EXPECT_EQ(m.sb + m.sdsd + m.lcs, 0.0);
  EXPECT_NEAR(*m.r2, 1.0, 1e-12);
}

TEST(Metrics, PureBias) {
  const auto m = metrics(pairs({2, 6, 11}, {1, 5, 10}));
  EXPECT_DOUBLE_EQ(m.me, 1.0);
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  EXPECT_DOUBLE_EQ(m.sb, 1.0);
  EXPECT_NEAR(m.sdsd, 0.0, 1e-12);
  EXPECT_NEAR(m.lcs, 0.0, 1e-12);
}

TEST(Metrics, PureScale) {
  const auto m = metrics(pairs({2, 4, 6}, {1, 2, 3}));
  const double var = 2.0 / 3.0;  // population variance of {1, 2, 3}
  EXPECT_DOUBLE_EQ(m.sb, 4.0);
  EXPECT_NEAR(m.sdsd, var, 1e-12);
  EXPECT_NEAR(m.lcs, 0.0, 1e-12);
  EXPECT_NEAR(m.rmse * m.rmse, (1.0 + 4.0 + 9.0) / 3.0, 1e-12);
}

TEST(Metrics, DecompositionIdentityOnRandomSets) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> n(2, 200);
  for (int t = 0; t < 1000; ++t) {
    const auto s = random_pairs(rng, n(rng));
    const auto m = metrics(s);
    const double direct = msd(s);
    EXPECT_LT(std::abs(m.sb + m.sdsd + m.lcs - direct), 1e-9 * direct);
    EXPECT_NEAR(m.rmse * m.rmse, direct, 1e-9 * direct);
    EXPECT_LE(m.mae, m.rmse + 1e-12);
  }
}

TEST(Metrics, OrderExclusionAndAffineProperties) {
  std::mt19937_64 rng(2);
  auto s = random_pairs(rng, 50);
  const auto base = metrics(s);
  auto shuffled = s;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto m = metrics(shuffled);
  EXPECT_NEAR(m.mae, base.mae, 1e-12);
  EXPECT_NEAR(*m.r2, *base.r2, 1e-12);

  auto with_excluded = s;
  with_excluded.push_back({1000.0, 0.0, "clear-cut", true});
  EXPECT_EQ(metrics(with_excluded), base);

  auto affine = s;
  for (auto& p : affine) p.predicted_m = 3.0 * p.predicted_m + 7.0;
  EXPECT_NEAR(*metrics(affine).r2, *base.r2, 1e-12);
  auto shifted = s;
  for (auto& p : shifted) p.predicted_m += 2.5;
  EXPECT_NEAR(metrics(shifted).me, base.me + 2.5, 1e-12);
}

TEST(Metrics, DegenerateInputs) {
  EXPECT_FALSE(metrics(pairs({3}, {4})).r2.has_value());
  EXPECT_FALSE(metrics(pairs({3, 3, 3}, {1, 2, 4})).r2.has_value());
  EXPECT_CANOPY_ERROR(metrics({}), ErrorCode::EmptyEvaluation);
  std::vector<PairedSample> all_excluded = {{1, 2, "", true}};
  EXPECT_CANOPY_ERROR(metrics(all_excluded), ErrorCode::EmptyEvaluation);
}

TEST(Metrics, ConstantMeanPredictor) {
  std::mt19937_64 rng(3);
  auto s = random_pairs(rng, 400);
  double mean = 0.0;
  for (const auto& p : s) mean += p.reference_m;
  mean /= static_cast<double>(s.size());
  for (auto& p : s) p.predicted_m = mean;
  const auto m = metrics(s);
  EXPECT_NEAR(*r2_identity(s), 0.0, 1e-12);
  EXPECT_NEAR(m.sb, 0.0, 1e-12);
  // With a constant prediction the whole error is the reference variance.
  EXPECT_NEAR(m.sdsd, m.rmse * m.rmse, 1e-9);
  EXPECT_EQ(m.lcs, 0.0);
  EXPECT_FALSE(m.r2.has_value());
}

TEST(Quantile, LinearInterpolation) {
  const std::vector<double> v = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.75), 3.25);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 4.0);
}

TEST(HeightBins, HandBuiltBins) {
  // Reference heights with prediction offsets d (pred = ref + d).
  const std::vector<double> ref = {1, 2, 3, 4, 5, 7, 9, 17};
  const std::vector<double> d = {-1, 0, 1, 2, 3, 3, 6, 0};
  std::vector<double> pred;
  for (std::size_t i = 0; i < ref.size(); ++i) pred.push_back(ref[i] + d[i]);
  const auto bins = height_bin_stats(pairs(pred, ref));
  ASSERT_EQ(bins.size(), 4u);
  EXPECT_EQ(bins[0].n, 4u);
  EXPECT_DOUBLE_EQ(*bins[0].median, 0.5);
  EXPECT_DOUBLE_EQ(*bins[0].q25, -0.25);
  EXPECT_DOUBLE_EQ(*bins[0].q75, 1.25);
  EXPECT_NEAR(*bins[0].p5, -0.85, 1e-12);
  EXPECT_NEAR(*bins[0].p95, 1.85, 1e-12);
  EXPECT_DOUBLE_EQ(*bins[0].me, 0.5);
  EXPECT_DOUBLE_EQ(*bins[0].mae, 1.0);
  EXPECT_EQ(bins[1].lower_m, 5.0);  // 5.0 m opens the second bin
  EXPECT_EQ(bins[1].n, 3u);
  EXPECT_DOUBLE_EQ(*bins[1].median, 3.0);
  EXPECT_DOUBLE_EQ(*bins[1].q25, 3.0);
  EXPECT_DOUBLE_EQ(*bins[1].q75, 4.5);
  EXPECT_DOUBLE_EQ(*bins[1].me, 4.0);
  EXPECT_EQ(bins[2].n, 0u);
  EXPECT_FALSE(bins[2].median.has_value());
  EXPECT_EQ(bins[3].n, 1u);
  EXPECT_EQ(bins[3].upper_m, 20.0);
}

TEST(HeightBins, IdenticalSamplesHaveNoSpread) {
  const auto bins = height_bin_stats(pairs({8, 8, 8}, {6, 6, 6}));
  const auto& b = bins[1];
  EXPECT_EQ(*b.q25, *b.q75);
  EXPECT_EQ(*b.p5, *b.p95);
  EXPECT_EQ(*b.median, 2.0);
}

TEST(PlotCompare, ConstantMapAllModes) {
  RasterStack m(grid(10, 10), {"h"});
  std::fill(m.values().begin(), m.values().end(), 17.5f);
  const Plot p{{50.0, 50.0}, 30.0};
  for (auto mode : {PlotMode::MeanIntersect, PlotMode::Max, PlotMode::CenterPixel, PlotMode::MeanCircle})
    EXPECT_DOUBLE_EQ(plot_compare(m, p, mode), 17.5);
}

TEST(PlotCompare, NinePixelMean) {
  std::mt19937_64 rng(4);
  const auto m = random_map(rng, 10, 10);
  // Center of pixel (row 4, col 4).
  const Plot p{{45.0, 55.0}, 30.0};
  double sum = 0.0;
  for (int r = 3; r <= 5; ++r)
    for (int c = 3; c <= 5; ++c) sum += m.at(0, r, c);
  EXPECT_NEAR(plot_compare(m, p, PlotMode::MeanIntersect), sum / 9.0, 1e-5);
  EXPECT_EQ(plot_compare(m, p, PlotMode::CenterPixel), m.at(0, 4, 4));
}

TEST(PlotCompare, OrderStatistics) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(5.0, 195.0);
  for (int t = 0; t < 200; ++t) {
    const auto m = random_map(rng, 20, 20);
    const Plot p{{pos(rng), pos(rng)}, 30.0};
    const double mean = plot_compare(m, p, PlotMode::MeanIntersect);
    double lo = HUGE_VAL;
    for (const auto& c : circle_pixels(m.spec(), p.center, 30.0)) lo = std::min(lo, double(m.at(0, c.row, c.col)));
    EXPECT_GE(plot_compare(m, p, PlotMode::Max), mean);
    EXPECT_GE(mean, lo - 1e-9);
  }
}

TEST(PlotCompare, NoData) {
  RasterStack m(grid(4, 4), {"h"});
  std::fill(m.values().begin(), m.values().end(), m.nodata());
  EXPECT_CANOPY_ERROR(plot_compare(m, {{20.0, 20.0}, 30.0}, PlotMode::MeanIntersect), ErrorCode::NoData);
  EXPECT_CANOPY_ERROR(plot_compare(m, {{20.0, 20.0}, 30.0}, PlotMode::CenterPixel), ErrorCode::NoData);
}

TEST(StandMedian, OutlierAndSortOracle) {
  RasterStack m(grid(3, 1), {"h"}, {3.0f, 100.0f, 5.0f});
  const Polygon all = {{0, 0}, {30, 0}, {30, 10}, {0, 10}};
  EXPECT_EQ(stand_median(m, all), 5.0);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> coord(0.0, 200.0);
  for (int t = 0; t < 100; ++t) {
    const auto map = random_map(rng, 20, 20);
    double x0 = coord(rng), x1 = coord(rng), y0 = coord(rng), y1 = coord(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    const Polygon tri = {{x0, y0}, {x1 + 20, y0}, {x0, y1 + 20}};
    std::vector<double> vals;
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 20; ++c)
        if (point_in_polygon(tri, {c * 10.0 + 5.0, 200.0 - r * 10.0 - 5.0})) vals.push_back(map.at(0, r, c));
    if (vals.empty()) {
      EXPECT_CANOPY_ERROR(stand_median(map, tri), ErrorCode::NoData);
      continue;
    }
    std::sort(vals.begin(), vals.end());
    const auto n = vals.size();
    const double expect = n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
    EXPECT_DOUBLE_EQ(stand_median(map, tri), expect);
  }
}

TEST(EvaluateFootprints, PerfectMapAndDrops) {
  RasterStack truth(grid(4, 4), {"h"});
  for (std::size_t i = 0; i < truth.values().size(); ++i) truth.values()[i] = static_cast<float>(i);
  RasterStack cover(truth.spec(), {"tc"});
  std::fill(cover.values().begin(), cover.values().end(), 1.0f);
  cover.at(0, 3, 3) = 0.0f;
  auto map = truth;
  map.at(0, 0, 1) = map.nodata();
  std::vector<FootprintRecord> fps;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      FootprintRecord f;
      f.id = r * 4 + c;
      f.x_m = c * 10 + 5;
      f.y_m = 40 - r * 10 - 5;
      f.rh95_m = truth.at(0, r, c);
      fps.push_back(f);
    }
  const auto e = evaluate_test_footprints(map, fps, cover);
  EXPECT_EQ(e.report.n, 14u);
  EXPECT_EQ(e.report.mae, 0.0);
  EXPECT_EQ(e.dropped_nonforest, 1u);
  EXPECT_EQ(e.dropped_nodata, 1u);
  std::vector<FootprintRecord> none = {fps[15]};
  EXPECT_CANOPY_ERROR(evaluate_test_footprints(map, none, cover), ErrorCode::EmptyEvaluation);
}

class ReportIo : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "canopy_test_report";
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(ReportIo, EmptyListIsHeaderOnly) {
  emit_report({}, dir);
  std::ifstream in(dir / "metrics.csv");
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, std::string(kMetricsCsvHeader) + "\n");
  EXPECT_TRUE(read_report(dir).empty());
}

TEST_F(ReportIo, SevenScenariosRoundTrip) {
  std::mt19937_64 rng(7);
  std::vector<DatasetReport> reports;
  for (int s = 1; s <= 7; ++s) {
    const auto samples = random_pairs(rng, 30);
    reports.push_back({"gedi_test", s, metrics(samples), height_bin_stats(samples)});
  }
  reports[2].metrics.r2.reset();
  emit_report(reports, dir);
  std::ifstream in(dir / "metrics.csv");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 8);
  EXPECT_EQ(read_report(dir), reports);
}

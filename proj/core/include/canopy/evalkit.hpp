#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "canopy/gedi.hpp"
#include "canopy/raster.hpp"

namespace canopy {

struct PairedSample {
  double predicted_m = 0.0;
  double reference_m = 0.0;
  std::string group;
  bool excluded = false;  // carried along but never aggregated
};

struct MetricReport {
  std::size_t n = 0;
  double mae = 0.0;
  double rmse = 0.0;
  double me = 0.0;            // mean(pred - ref)
  std::optional<double> r2;   // squared Pearson correlation
  double sb = 0.0;            // squared bias
  double sdsd = 0.0;          // squared difference of standard deviations
  double lcs = 0.0;           // lack of correlation
  bool operator==(const MetricReport&) const = default;
};

// Population (1/n) moments throughout. Throws EmptyEvaluation without any
// non-excluded sample; R2 is empty for n < 2 or a constant series.
MetricReport metrics(std::span<const PairedSample> samples);

// 1 - SS_res / SS_tot against the identity line pred = ref.
std::optional<double> r2_identity(std::span<const PairedSample> samples);

enum class PlotMode { MeanIntersect, Max, CenterPixel, MeanCircle };
std::string to_string(PlotMode mode);

struct Plot {
  Point center;
  double diameter_m = 30.0;
};

// Height for a field plot read off band 0 of a map. Nodata pixels are ignored;
// all-nodata coverage throws NoData.
double plot_compare(const RasterStack& map, const Plot& plot, PlotMode mode);

// Median of non-nodata pixel values with centers inside the polygon.
double stand_median(const RasterStack& map, const Polygon& polygon);

// Linear interpolation between order statistics; `sorted` must be ascending.
double quantile_sorted(std::span<const double> sorted, double q);

struct BinStats {
  double lower_m = 0.0;
  double upper_m = 0.0;
  std::size_t n = 0;
  // Statistics of pred - ref; empty when n == 0.
  std::optional<double> median, q25, q75, p5, p95, me, mae;
  bool operator==(const BinStats&) const = default;
};

// Half-open reference-height bins [k*w, (k+1)*w) from 0 up to the largest
// reference height. Empty bins are reported with n = 0.
std::vector<BinStats> height_bin_stats(std::span<const PairedSample> samples, double bin_width_m = 5.0);

struct FootprintEvaluation {
  MetricReport report;
  std::vector<BinStats> bins;
  std::vector<PairedSample> pairs;
  std::size_t dropped_nonforest = 0;
  std::size_t dropped_nodata = 0;  // outside the map or on a nodata pixel
};

// Pairs the prediction at each footprint's pixel with its RH95.
FootprintEvaluation evaluate_test_footprints(const RasterStack& map, std::span<const FootprintRecord> footprints,
                                             const RasterStack& tree_cover);

struct DatasetReport {
  std::string dataset;
  int scenario = 1;
  MetricReport metrics;
  std::vector<BinStats> bins;
  bool operator==(const DatasetReport&) const = default;
};

inline constexpr const char* kMetricsCsvHeader = "dataset,scenario,n,mae_m,rmse_m,me_m,r2,sb,sdsd,lcs";

// Writes `<dir>/metrics.csv` and `<dir>/bin_stats.json`.
void emit_report(std::span<const DatasetReport> reports, const std::filesystem::path& dir);
std::vector<DatasetReport> read_report(const std::filesystem::path& dir);

}  // namespace canopy

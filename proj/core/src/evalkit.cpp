#include "canopy/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include "canopy/error.hpp"

namespace canopy {

MetricReport metrics(std::span<const PairedSample> samples) {
  std::vector<const PairedSample*> used;
  for (const auto& s : samples) {
    if (s.excluded) continue;
    require(std::isfinite(s.predicted_m) && std::isfinite(s.reference_m), ErrorCode::InvalidArgument,
            "samples must be finite");
    used.push_back(&s);
  }
  if (used.empty()) fail(ErrorCode::EmptyEvaluation, "no samples to evaluate");
  const double n = static_cast<double>(used.size());

  double mp = 0.0, mr = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  for (const auto* s : used) {
    mp += s->predicted_m;
    mr += s->reference_m;
    const double d = s->predicted_m - s->reference_m;
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  mp /= n;
  mr /= n;
  // A constant series has zero spread even when its mean does not round back exactly.
  bool flat_p = true, flat_r = true;
  for (const auto* s : used) {
    flat_p &= s->predicted_m == used.front()->predicted_m;
    flat_r &= s->reference_m == used.front()->reference_m;
  }
  double vp = 0.0, vr = 0.0, cov = 0.0;
  for (const auto* s : used) {
    const double a = s->predicted_m - mp;
    const double b = s->reference_m - mr;
    vp += a * a;
    vr += b * b;
    cov += a * b;
  }
  vp = flat_p ? 0.0 : vp / n;
  vr = flat_r ? 0.0 : vr / n;
  cov = flat_p || flat_r ? 0.0 : cov / n;
  const double sp = std::sqrt(vp);
  const double sr = std::sqrt(vr);

  MetricReport r;
  r.n = used.size();
  r.mae = abs_sum / n;
  r.rmse = std::sqrt(sq_sum / n);
  r.me = mp - mr;
  r.sb = (mp - mr) * (mp - mr);
  r.sdsd = (sp - sr) * (sp - sr);
  // 2 * sp * sr * (1 - r) without dividing by a possibly zero product.
  r.lcs = 2.0 * (sp * sr - cov);
  if (used.size() >= 2 && vp > 0.0 && vr > 0.0) {
    const double corr = cov / (sp * sr);
    r.r2 = corr * corr;
  }
  return r;
}

std::optional<double> r2_identity(std::span<const PairedSample> samples) {
  double mr = 0.0;
  std::size_t n = 0;
  for (const auto& s : samples)
    if (!s.excluded) {
      mr += s.reference_m;
      ++n;
    }
  if (n < 2) return std::nullopt;
  mr /= static_cast<double>(n);
  double res = 0.0, tot = 0.0;
  for (const auto& s : samples) {
    if (s.excluded) continue;
    res += (s.predicted_m - s.reference_m) * (s.predicted_m - s.reference_m);
    tot += (s.reference_m - mr) * (s.reference_m - mr);
  }
  if (tot == 0.0) return std::nullopt;
  return 1.0 - res / tot;
}

std::string to_string(PlotMode mode) {
  switch (mode) {
    case PlotMode::MeanIntersect: return "mean_intersect";
    case PlotMode::Max: return "max";
    case PlotMode::CenterPixel: return "center_pixel";
    case PlotMode::MeanCircle: return "mean_circle";
  }
  return "unknown";
}

double plot_compare(const RasterStack& map, const Plot& plot, PlotMode mode) {
  require(plot.diameter_m > 0.0, ErrorCode::InvalidArgument, "plot diameter must be positive");
  if (mode == PlotMode::CenterPixel) {
    const auto cell = map.spec().cell_of(plot.center);
    if (!cell) fail(ErrorCode::NoData, "plot center outside the map");
    const float v = map.at(0, cell->row, cell->col);
    if (map.is_nodata(v)) fail(ErrorCode::NoData, "plot center pixel is nodata");
    return v;
  }
  double sum = 0.0, best = -HUGE_VAL;
  std::size_t n = 0;
  for (const auto& c : circle_pixels(map.spec(), plot.center, plot.diameter_m, CircleMode::Intersect)) {
    const float v = map.at(0, c.row, c.col);
    if (map.is_nodata(v)) continue;
    sum += v;
    best = std::max(best, static_cast<double>(v));
    ++n;
  }
  if (n == 0) fail(ErrorCode::NoData, "no valid pixel under the plot");
  return mode == PlotMode::Max ? best : sum / static_cast<double>(n);
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double stand_median(const RasterStack& map, const Polygon& polygon) {
  std::vector<double> values;
  for (const auto& c : polygon_pixels(map.spec(), polygon)) {
    const float v = map.at(0, c.row, c.col);
    if (!map.is_nodata(v)) values.push_back(v);
  }
  if (values.empty()) fail(ErrorCode::NoData, "stand covers no valid pixel");
  return median_of(std::move(values));
}

double quantile_sorted(std::span<const double> sorted, double q) {
  require(!sorted.empty(), ErrorCode::InvalidArgument, "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, ErrorCode::InvalidArgument, "quantile level must be in [0, 1]");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<BinStats> height_bin_stats(std::span<const PairedSample> samples, double bin_width_m) {
  require(bin_width_m > 0.0, ErrorCode::InvalidArgument, "bin width must be positive");
  std::vector<std::vector<double>> diffs;
  for (const auto& s : samples) {
    if (s.excluded) continue;
    const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(s.reference_m / bin_width_m)));
    if (k >= diffs.size()) diffs.resize(k + 1);
    diffs[k].push_back(s.predicted_m - s.reference_m);
  }
  std::vector<BinStats> bins;
  for (std::size_t k = 0; k < diffs.size(); ++k) {
    BinStats b;
    b.lower_m = static_cast<double>(k) * bin_width_m;
    b.upper_m = b.lower_m + bin_width_m;
    auto& d = diffs[k];
    b.n = d.size();
    if (!d.empty()) {
      std::sort(d.begin(), d.end());
      b.median = quantile_sorted(d, 0.5);
      b.q25 = quantile_sorted(d, 0.25);
      b.q75 = quantile_sorted(d, 0.75);
      b.p5 = quantile_sorted(d, 0.05);
      b.p95 = quantile_sorted(d, 0.95);
      double me = 0.0, mae = 0.0;
      for (double x : d) {
        me += x;
        mae += std::abs(x);
      }
      b.me = me / static_cast<double>(d.size());
      b.mae = mae / static_cast<double>(d.size());
    }
    bins.push_back(b);
  }
  return bins;
}

FootprintEvaluation evaluate_test_footprints(const RasterStack& map, std::span<const FootprintRecord> footprints,
                                             const RasterStack& tree_cover) {
  FootprintEvaluation out;
  const auto masked = mask_nonforest(footprints, tree_cover);
  out.dropped_nonforest = footprints.size() - masked.kept.size();
  for (const auto& f : masked.kept) {
    const auto cell = map.spec().cell_of(f.location());
    if (!cell || !f.rh95_m) {
      ++out.dropped_nodata;
      continue;
    }
    const float v = map.at(0, cell->row, cell->col);
    if (map.is_nodata(v)) {
      ++out.dropped_nodata;
      continue;
    }
    out.pairs.push_back({static_cast<double>(v), *f.rh95_m, {}, false});
  }
  if (out.pairs.empty()) fail(ErrorCode::EmptyEvaluation, "no test footprint falls on a predicted forest pixel");
  out.report = metrics(out.pairs);
  out.bins = height_bin_stats(out.pairs);
  return out;
}

}  // namespace canopy

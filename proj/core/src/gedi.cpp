#include "canopy/gedi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <unordered_set>

#include "canopy/error.hpp"

namespace canopy {

std::string to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::QualityFlagZero: return "QualityFlagZero";
    case RejectReason::NullMetric: return "NullMetric";
    case RejectReason::LowAmplitudeRatio: return "LowAmplitudeRatio";
  }
  return "Unknown";
}

RejectReason parse_reject_reason(const std::string& text) {
  if (text == "QualityFlagZero") return RejectReason::QualityFlagZero;
  if (text == "NullMetric") return RejectReason::NullMetric;
  if (text == "LowAmplitudeRatio") return RejectReason::LowAmplitudeRatio;
  fail(ErrorCode::ParseError, "unknown reject reason " + text);
}

std::optional<RejectReason> check_footprint(const FootprintRecord& r) {
  if (r.quality_flag == 0) return RejectReason::QualityFlagZero;
  if (!r.toploc || !r.botloc || !r.num_detectedmodes || !r.rh100_m) return RejectReason::NullMetric;
  // An undefined ratio (missing or non-positive noise) cannot pass.
  if (!r.max_amplitude || !r.noise_std || !(*r.noise_std > 0.0)) return RejectReason::LowAmplitudeRatio;
  const double ratio = *r.max_amplitude / *r.noise_std;
  if (!(ratio >= kMinAmplitudeNoiseRatio)) return RejectReason::LowAmplitudeRatio;
  return std::nullopt;
}

FilterReport filter_footprints(std::span<const FootprintRecord> records) {
  FilterReport report;
  for (const auto& r : records) {
    if (auto reason = check_footprint(r))
      report.rejected.emplace_back(r.id, *reason);
    else
      report.kept.push_back(r.id);
  }
  return report;
}

std::vector<FootprintRecord> kept_records(std::span<const FootprintRecord> records, const FilterReport& report) {
  std::unordered_set<std::int64_t> keep(report.kept.begin(), report.kept.end());
  std::vector<FootprintRecord> out;
  for (const auto& r : records)
    if (keep.count(r.id)) out.push_back(r);
  return out;
}

int tile_of(std::span<const TileIndex> tiles, Point p) {
  for (std::size_t i = 0; i < tiles.size(); ++i)
    if (tiles[i].bounds.contains(p)) return static_cast<int>(i);
  return -1;
}

std::vector<std::int64_t> count_per_tile(std::span<const TileIndex> tiles,
                                         std::span<const FootprintRecord> footprints) {
  std::vector<std::int64_t> counts(tiles.size(), 0);
  for (const auto& f : footprints) {
    const int t = tile_of(tiles, f.location());
    if (t >= 0) ++counts[static_cast<std::size_t>(t)];
  }
  return counts;
}

std::array<double, 3> achieved_fractions(std::span<const SplitKind> per_tile, std::span<const std::int64_t> counts) {
  std::array<double, 3> sums{};
  double total = 0.0;
  for (std::size_t i = 0; i < per_tile.size(); ++i) {
    const auto k = static_cast<std::size_t>(per_tile[i]);
    if (k < 3) sums[k] += static_cast<double>(counts[i]);
    total += static_cast<double>(counts[i]);
  }
  if (total > 0)
    for (auto& s : sums) s /= total;
  return sums;
}

SplitAssignment split_tiles(std::span<const TileIndex> tiles, std::span<const std::int64_t> counts,
                            SplitFractions fractions, std::uint64_t seed) {
  require(tiles.size() == counts.size(), ErrorCode::InvalidArgument, "one footprint count per tile required");
  const auto target = fractions.as_array();
  const double sum = target[0] + target[1] + target[2];
  require(target[0] >= 0 && target[1] >= 0 && target[2] >= 0 && std::abs(sum - 1.0) < 1e-9,
          ErrorCode::InvalidArgument, "split fractions must be non-negative and sum to 1");
  std::int64_t total = 0;
  for (auto c : counts) {
    require(c >= 0, ErrorCode::InvalidArgument, "footprint counts must be non-negative");
    total += c;
  }
  require(total > 0, ErrorCode::EmptyPopulation, "no footprints in any tile");

  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitAssignment out;
  out.per_tile.assign(tiles.size(), SplitKind::Unassigned);
  std::array<double, 3> assigned{};
  for (auto i : order) {
    std::size_t best = 0;
    double best_deficit = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 3; ++k) {
      if (target[k] <= 0.0) continue;
      const double deficit = target[k] * static_cast<double>(total) - assigned[k];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = k;
      }
    }
    assigned[best] += static_cast<double>(counts[i]);
    out.per_tile[i] = static_cast<SplitKind>(best);
  }
  for (std::size_t k = 0; k < 3; ++k) out.footprints[k] = static_cast<std::int64_t>(assigned[k]);
  out.achieved = achieved_fractions(out.per_tile, counts);
  for (std::size_t k = 0; k < 3; ++k) {
    const double d = std::abs(out.achieved[k] - target[k]);
    out.max_abs_deviation = std::max(out.max_abs_deviation, d);
    out.l1_deviation += d;
  }
  return out;
}

std::vector<FootprintRecord> footprints_in_split(std::span<const FootprintRecord> footprints,
                                                 std::span<const TileIndex> tiles,
                                                 std::span<const SplitKind> per_tile, SplitKind which) {
  require(tiles.size() == per_tile.size(), ErrorCode::InvalidArgument, "one assignment per tile required");
  std::vector<FootprintRecord> out;
  for (const auto& f : footprints) {
    const int t = tile_of(tiles, f.location());
    if (t >= 0 && per_tile[static_cast<std::size_t>(t)] == which) out.push_back(f);
  }
  return out;
}

MaskResult mask_nonforest(std::span<const FootprintRecord> footprints, const RasterStack& tree_cover) {
  require(tree_cover.band_count() == 1, ErrorCode::InvalidArgument, "tree cover must be a single band");
  MaskResult out;
  for (const auto& f : footprints) {
    auto cell = tree_cover.spec().cell_of(f.location());
    if (!cell) {
      ++out.outside_raster;
      continue;
    }
    const float cover = tree_cover.at(0, cell->row, cell->col);
    if (!tree_cover.is_nodata(cover) && cover > 0.0f) out.kept.push_back(f);
  }
  return out;
}

RasterizeResult rasterize_footprints(std::span<const FootprintRecord> footprints, const GridSpec& spec,
                                     CollisionPolicy policy) {
  spec.validate();
  struct Acc {
    double sum = 0.0;
    double last = 0.0;
    int count = 0;
  };
  std::map<std::pair<int, int>, Acc> cells;
  RasterizeResult out;
  for (const auto& f : footprints) {
    if (!f.rh95_m || !std::isfinite(*f.rh95_m)) {
      ++out.dropped_null;
      continue;
    }
    auto cell = spec.cell_of(f.location());
    if (!cell) {
      ++out.dropped_outside;
      continue;
    }
    auto& a = cells[{cell->row, cell->col}];
    const double h = std::max(0.0, *f.rh95_m);
    a.sum += h;
    a.last = h;
    ++a.count;
  }
  std::vector<LabelEntry> entries;
  entries.reserve(cells.size());
  for (const auto& [rc, a] : cells) {
    const double v = policy == CollisionPolicy::Mean ? a.sum / a.count : a.last;
    entries.push_back({rc.first, rc.second, static_cast<float>(v), static_cast<float>(a.count)});
  }
  out.labels = SparseLabelRaster(spec, std::move(entries));
  return out;
}

std::vector<FootprintRecord> subsample_footprints(std::span<const FootprintRecord> footprints, double fraction,
                                                  std::uint64_t seed) {
  require(std::isfinite(fraction) && fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidFraction,
          "subsample fraction must lie in (0, 1]");
  const auto n = footprints.size();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  std::vector<FootprintRecord> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(footprints[i]);
  return out;
}

}  // namespace canopy

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "canopy/raster.hpp"

namespace canopy {

/// One LiDAR shot. Nullable metrics are std::nullopt when the source field
/// was empty.
struct FootprintRecord {
  std::int64_t id = 0;
  double x_m = 0.0;
  double y_m = 0.0;
  std::string acquired_at;
  std::optional<double> rh95_m;
  std::optional<double> rh100_m;
  int quality_flag = 1;
  std::optional<double> toploc;
  std::optional<double> botloc;
  std::optional<double> num_detectedmodes;
  std::optional<double> max_amplitude;
  std::optional<double> noise_std;
  std::optional<int> selected_algorithm;

  Point location() const { return {x_m, y_m}; }
  bool operator==(const FootprintRecord&) const = default;
};

enum class RejectReason { QualityFlagZero, NullMetric, LowAmplitudeRatio };
std::string to_string(RejectReason reason);
RejectReason parse_reject_reason(const std::string& text);

struct FilterReport {
  std::vector<std::int64_t> kept;
  std::vector<std::pair<std::int64_t, RejectReason>> rejected;
};

// Waveforms whose max amplitude / noise std falls below this are removed.
inline constexpr double kMinAmplitudeNoiseRatio = 30.0;

// First failing rule, checked in order: quality flag, null metrics, amplitude ratio.
std::optional<RejectReason> check_footprint(const FootprintRecord& record);
FilterReport filter_footprints(std::span<const FootprintRecord> records);
// Records listed as kept in `report`, in input order.
std::vector<FootprintRecord> kept_records(std::span<const FootprintRecord> records, const FilterReport& report);

struct SplitFractions {
  double train = 0.75;
  double validation = 0.15;
  double test = 0.10;
  std::array<double, 3> as_array() const { return {train, validation, test}; }
};

struct SplitAssignment {
  std::vector<SplitKind> per_tile;
  std::array<std::int64_t, 3> footprints{};  // train, validation, test
  std::array<double, 3> achieved{};
  double max_abs_deviation = 0.0;
  double l1_deviation = 0.0;
};

// Footprints per tile, located by recorded position.
std::vector<std::int64_t> count_per_tile(std::span<const TileIndex> tiles,
                                         std::span<const FootprintRecord> footprints);
// Index of the tile containing p, or -1.
int tile_of(std::span<const TileIndex> tiles, Point p);

// Seeded shuffle, then each tile goes to the split whose footprint total is
// furthest below its target share. Ties favour the earlier split.
SplitAssignment split_tiles(std::span<const TileIndex> tiles, std::span<const std::int64_t> counts,
                            SplitFractions fractions, std::uint64_t seed);
std::array<double, 3> achieved_fractions(std::span<const SplitKind> per_tile,
                                         std::span<const std::int64_t> counts);

std::vector<FootprintRecord> footprints_in_split(std::span<const FootprintRecord> footprints,
                                                 std::span<const TileIndex> tiles,
                                                 std::span<const SplitKind> per_tile, SplitKind which);

struct MaskResult {
  std::vector<FootprintRecord> kept;
  std::size_t outside_raster = 0;
};

// Keeps footprints whose containing pixel has tree cover > 0.
MaskResult mask_nonforest(std::span<const FootprintRecord> footprints, const RasterStack& tree_cover);

enum class CollisionPolicy { Mean, LastWrite };

struct RasterizeResult {
  SparseLabelRaster labels;
  std::size_t dropped_outside = 0;
  std::size_t dropped_null = 0;  // records without an RH95 value
};

// RH95 is written to the pixel containing each footprint center.
RasterizeResult rasterize_footprints(std::span<const FootprintRecord> footprints, const GridSpec& spec,
                                     CollisionPolicy policy = CollisionPolicy::Mean);

// Uniform random subset of size round(fraction * N), kept in input order.
std::vector<FootprintRecord> subsample_footprints(std::span<const FootprintRecord> footprints, double fraction,
                                                  std::uint64_t seed);

// Footprint CSV with header
// id,x_m,y_m,acquired_at,rh95_m,rh100_m,quality_flag,toploc,botloc,num_detectedmodes,max_amplitude,noise_std,selected_algorithm
inline constexpr const char* kFootprintCsvHeader =
    "id,x_m,y_m,acquired_at,rh95_m,rh100_m,quality_flag,toploc,botloc,num_detectedmodes,max_amplitude,"
    "noise_std,selected_algorithm";
std::vector<FootprintRecord> read_footprints_csv(const std::filesystem::path& path);
void write_footprints_csv(std::span<const FootprintRecord> records, const std::filesystem::path& path);

void write_filter_report(const FilterReport& report, const std::filesystem::path& path);
FilterReport read_filter_report(const std::filesystem::path& path);

// Tile table with header tile_id,row,col,min_x,min_y,max_x,max_y,assignment
void write_tiles_csv(std::span<const TileIndex> tiles, const std::filesystem::path& path);
std::vector<TileIndex> read_tiles_csv(const std::filesystem::path& path);

}  // namespace canopy

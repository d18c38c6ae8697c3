#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "canopy/raster.hpp"

namespace canopy {

/// One acquisition: band-sequential values plus a per-pixel validity mask
/// (0 = cloudy / invalid).
struct Epoch {
  std::int64_t timestamp = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;
};

struct TimeSeriesStack {
  GridSpec spec;
  std::vector<std::string> band_names;
  std::vector<Epoch> epochs;
  float nodata = kDefaultNodata;

  void validate() const;
};

// Per-pixel, per-band median over valid observations. Even counts average the
// two central values; pixels with no valid observation become nodata.
RasterStack median_composite(const TimeSeriesStack& series);

// Backscatter dB clipped to [-30, 0] and mapped to [0, 1].
RasterStack normalize_s1(const RasterStack& db);
// Reflectance DN clipped to [0, 5000] and divided by 5000.
RasterStack normalize_s2(const RasterStack& dn);

inline constexpr std::array<const char*, 10> kS2Bands = {"B2", "B3", "B4", "B5", "B6",
                                                          "B7", "B8", "B8A", "B11", "B12"};
inline constexpr std::array<const char*, 4> kS1Bands = {"VV_asc", "VH_asc", "VV_des", "VH_des"};

// Canonical 14-band order: the ten S2 bands followed by the four S1 bands.
std::vector<std::string> canonical_band_names();

/// Input-band subsets 1..7.
class ScenarioId {
 public:
  explicit ScenarioId(int value);
  int value() const { return value_; }
  bool operator==(const ScenarioId&) const = default;

 private:
  int value_;
};

// Band names used by a scenario, in the order they are stacked.
//   1 all 14 | 2 all S1 | 3 all S2 | 4 B2,B3,B4,B8 | 5 VV_des,VH_des | 6 VV_des | 7 B8
std::vector<std::string> scenario_bands(ScenarioId scenario);

RasterStack select_bands(const RasterStack& full_stack, ScenarioId scenario);
RasterStack select_bands(const RasterStack& stack, const std::vector<std::string>& names);

// Concatenate stacks sharing a grid (band names must stay unique).
RasterStack stack_bands(const std::vector<RasterStack>& stacks);

}  // namespace canopy

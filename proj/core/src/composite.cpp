#include "canopy/composite.hpp"

#include <algorithm>
#include <cmath>

#include "canopy/error.hpp"
#include "canopy/parallel.hpp"

namespace canopy {

void TimeSeriesStack::validate() const {
  spec.validate();
  require(!band_names.empty(), ErrorCode::InvalidArgument, "time series needs at least one band");
  const auto cells = static_cast<std::size_t>(spec.cell_count());
  for (const auto& e : epochs) {
    require(e.values.size() == cells * band_names.size(), ErrorCode::InvalidArgument,
            "epoch value count does not match the grid and band set");
    require(e.valid.empty() || e.valid.size() == cells, ErrorCode::InvalidArgument,
            "epoch mask size does not match the grid");
  }
}

RasterStack median_composite(const TimeSeriesStack& series) {
  require(!series.epochs.empty(), ErrorCode::EmptySeries, "median composite needs at least one epoch");
  series.validate();
  const auto cells = static_cast<std::size_t>(series.spec.cell_count());
  const auto bands = series.band_names.size();
  RasterStack out(series.spec, series.band_names, series.nodata);
  auto dst = out.values();
  parallel_for(bands, [&](std::size_t b) {
    std::vector<float> obs;
    obs.reserve(series.epochs.size());
    for (std::size_t i = 0; i < cells; ++i) {
      obs.clear();
      for (const auto& e : series.epochs) {
        if (!e.valid.empty() && !e.valid[i]) continue;
        const float v = e.values[b * cells + i];
        if (std::isnan(v) || v == series.nodata) continue;
        obs.push_back(v);
      }
      float m = series.nodata;
      if (!obs.empty()) {
        const auto n = obs.size();
        const auto mid = obs.begin() + static_cast<std::ptrdiff_t>(n / 2);
        std::nth_element(obs.begin(), mid, obs.end());
        if (n % 2 == 1) {
          m = *mid;
        } else {
          const float upper = *mid;
          const float lower = *std::max_element(obs.begin(), mid);
          m = static_cast<float>(0.5 * (static_cast<double>(lower) + upper));
        }
      }
      dst[b * cells + i] = m;
    }
  });
  return out;
}

namespace {

RasterStack clip_scale(const RasterStack& in, double lo, double hi) {
  RasterStack out = in;
  for (float& v : out.values()) {
    if (std::isnan(v)) {
      v = in.nodata();
      continue;
    }
    if (v == in.nodata()) continue;
    const double c = std::clamp(static_cast<double>(v), lo, hi);
    v = static_cast<float>((c - lo) / (hi - lo));
  }
  return out;
}

}  // namespace

RasterStack normalize_s1(const RasterStack& db) { return clip_scale(db, -30.0, 0.0); }

RasterStack normalize_s2(const RasterStack& dn) { return clip_scale(dn, 0.0, 5000.0); }

std::vector<std::string> canonical_band_names() {
  std::vector<std::string> names(kS2Bands.begin(), kS2Bands.end());
  names.insert(names.end(), kS1Bands.begin(), kS1Bands.end());
  return names;
}

ScenarioId::ScenarioId(int value) : value_(value) {
  require(value >= 1 && value <= 7, ErrorCode::InvalidArgument, "scenario must be in 1..7");
}

std::vector<std::string> scenario_bands(ScenarioId scenario) {
  switch (scenario.value()) {
    case 1: return canonical_band_names();
    case 2: return {kS1Bands.begin(), kS1Bands.end()};
    case 3: return {kS2Bands.begin(), kS2Bands.end()};
    case 4: return {"B2", "B3", "B4", "B8"};
    case 5: return {"VV_des", "VH_des"};
    case 6: return {"VV_des"};
    case 7: return {"B8"};
  }
  fail(ErrorCode::InvalidArgument, "scenario must be in 1..7");
}

RasterStack select_bands(const RasterStack& stack, const std::vector<std::string>& names) {
  std::vector<int> idx;
  for (const auto& n : names) {
    auto i = stack.band_index(n);
    require(i.has_value(), ErrorCode::MissingBand, "input stack lacks band " + n);
    idx.push_back(*i);
  }
  RasterStack out(stack.spec(), names, stack.nodata());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto src = stack.band(idx[k]);
    std::copy(src.begin(), src.end(), out.band(static_cast<int>(k)).begin());
  }
  return out;
}

RasterStack select_bands(const RasterStack& full_stack, ScenarioId scenario) {
  return select_bands(full_stack, scenario_bands(scenario));
}

RasterStack stack_bands(const std::vector<RasterStack>& stacks) {
  require(!stacks.empty(), ErrorCode::InvalidArgument, "nothing to stack");
  std::vector<std::string> names;
  std::vector<float> values;
  for (const auto& s : stacks) {
    require(s.spec() == stacks.front().spec(), ErrorCode::GridMismatch, "stacked rasters must share a grid");
    require(s.nodata() == stacks.front().nodata(), ErrorCode::InvalidArgument,
            "stacked rasters must share a nodata value");
    names.insert(names.end(), s.band_names().begin(), s.band_names().end());
    values.insert(values.end(), s.values().begin(), s.values().end());
  }
  return RasterStack(stacks.front().spec(), std::move(names), std::move(values), stacks.front().nodata());
}

}  // namespace canopy

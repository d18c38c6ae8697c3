#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "canopy/composite.hpp"
#include "canopy/error.hpp"

using namespace canopy;

namespace {

TimeSeriesStack series_1px(const std::vector<float>& values, const std::vector<std::uint8_t>& valid = {}) {
  TimeSeriesStack s;
  s.spec.width = s.spec.height = 1;
  s.band_names = {"b"};
  for (std::size_t i = 0; i < values.size(); ++i)
    s.epochs.push_back({static_cast<std::int64_t>(i), {values[i]}, {valid.empty() ? std::uint8_t{1} : valid[i]}});
  return s;
}

float sort_median(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : static_cast<float>(0.5 * (double(v[n / 2 - 1]) + v[n / 2]));
}

RasterStack one_band(std::vector<float> values) {
  GridSpec g;
  g.width = static_cast<int>(values.size());
  g.height = 1;
  return RasterStack(g, {"b"}, std::move(values));
}

RasterStack canonical_stack() {
  GridSpec g;
  g.width = 3;
  g.height = 2;
  auto names = canonical_band_names();
  RasterStack r(g, names);
  for (int b = 0; b < r.band_count(); ++b)
    for (auto& v : r.band(b)) v = static_cast<float>(b);
  return r;
}

}  // namespace

TEST(MedianComposite, SingleEpochIdentity) {
  const auto out = median_composite(series_1px({4.25f}));
  EXPECT_EQ(out.at(0, 0, 0), 4.25f);
}

TEST(MedianComposite, OddCount) { EXPECT_EQ(median_composite(series_1px({9, 1, 2})).at(0, 0, 0), 2.0f); }

TEST(MedianComposite, MaskedOutlierAndEvenCount) {
  EXPECT_EQ(median_composite(series_1px({1, 2, 3, 100}, {1, 1, 1, 0})).at(0, 0, 0), 2.0f);
  EXPECT_EQ(median_composite(series_1px({1, 2, 3, 4})).at(0, 0, 0), 2.5f);
}

TEST(MedianComposite, AllMaskedIsNodata) {
  const auto out = median_composite(series_1px({1, 2}, {0, 0}));
  EXPECT_TRUE(out.is_nodata(out.at(0, 0, 0)));
}

TEST(MedianComposite, EmptySeries) {
  TimeSeriesStack s;
  s.band_names = {"b"};
  try {
    median_composite(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySeries);
  }
}

TEST(MedianComposite, MatchesSortOracleAndIsPermutationInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-50.0f, 50.0f);
  std::bernoulli_distribution valid(0.7);
  TimeSeriesStack s;
  s.spec.width = 6;
  s.spec.height = 5;
  s.band_names = {"a", "b"};
  const std::size_t cells = 30;
  for (int e = 0; e < 9; ++e) {
    Epoch ep;
    ep.timestamp = e;
    for (std::size_t i = 0; i < 2 * cells; ++i) ep.values.push_back(u(rng));
    for (std::size_t i = 0; i < cells; ++i) ep.valid.push_back(valid(rng));
    s.epochs.push_back(ep);
  }
  const auto out = median_composite(s);
  for (int b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < cells; ++i) {
      std::vector<float> obs;
      for (const auto& ep : s.epochs)
        if (ep.valid[i]) obs.push_back(ep.values[b * cells + i]);
      const float got = out.band(b)[i];
      if (obs.empty())
        EXPECT_TRUE(out.is_nodata(got));
      else
        EXPECT_EQ(got, sort_median(obs));
    }
  auto shuffled = s;
  std::shuffle(shuffled.epochs.begin(), shuffled.epochs.end(), rng);
  auto doubled = s;
  doubled.epochs.insert(doubled.epochs.end(), s.epochs.begin(), s.epochs.end());
  const auto a = median_composite(shuffled), d = median_composite(doubled);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), out.values().begin()));
  EXPECT_TRUE(std::equal(d.values().begin(), d.values().end(), out.values().begin()));
}

TEST(Normalize, S1Endpoints) {
  const auto out = normalize_s1(one_band({-30.0f, 0.0f, -15.0f, -35.0f, 5.0f}));
  const float expect[] = {0.0f, 1.0f, 0.5f, 0.0f, 1.0f};
  for (int i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(out.at(0, 0, i), expect[i]);
}

TEST(Normalize, S2Endpoints) {
  const auto out = normalize_s2(one_band({0.0f, 5000.0f, 2500.0f, 6000.0f, -3.0f}));
  const float expect[] = {0.0f, 1.0f, 0.5f, 1.0f, 0.0f};
  for (int i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(out.at(0, 0, i), expect[i]);
}

TEST(Normalize, NodataAndNanBecomeNodata) {
  auto in = one_band({kDefaultNodata, std::numeric_limits<float>::quiet_NaN()});
  const auto out = normalize_s2(in);
  EXPECT_TRUE(out.is_nodata(out.at(0, 0, 0)));
  EXPECT_TRUE(out.is_nodata(out.at(0, 0, 1)));
}

TEST(Normalize, MonotoneAndIdempotentThroughInverseRange) {
  std::vector<float> db;
  for (int i = 0; i <= 400; ++i) db.push_back(-40.0f + 0.1f * i);
  const auto s1 = normalize_s1(one_band(db));
  for (int i = 1; i <= 400; ++i) EXPECT_GE(s1.at(0, 0, i), s1.at(0, 0, i - 1));
  // Map normalized values back to dB and normalize again.
  std::vector<float> back;
  for (float v : s1.values()) back.push_back(v * 30.0f - 30.0f);
  const auto again = normalize_s1(one_band(back));
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_NEAR(again.values()[i], s1.values()[i], 1e-6);
}

TEST(Scenarios, BandCounts) {
  const int expected[] = {14, 4, 10, 4, 2, 1, 1};
  for (int s = 1; s <= 7; ++s) EXPECT_EQ(scenario_bands(ScenarioId(s)).size(), std::size_t(expected[s - 1]));
  EXPECT_EQ(scenario_bands(ScenarioId(4)), (std::vector<std::string>{"B2", "B3", "B4", "B8"}));
  EXPECT_EQ(scenario_bands(ScenarioId(6)), (std::vector<std::string>{"VV_des"}));
  EXPECT_EQ(scenario_bands(ScenarioId(7)), (std::vector<std::string>{"B8"}));
  EXPECT_THROW(ScenarioId(0), Error);
  EXPECT_THROW(ScenarioId(8), Error);
}

TEST(Scenarios, SelectCopiesTheRightBands) {
  const auto full = canonical_stack();
  const auto s5 = select_bands(full, ScenarioId(5));
  ASSERT_EQ(s5.band_count(), 2);
  EXPECT_EQ(s5.at(0, 1, 2), 12.0f);  // VV_des is band 12 of the canonical order
  EXPECT_EQ(s5.at(1, 0, 0), 13.0f);
  EXPECT_EQ(select_bands(full, ScenarioId(1)).band_count(), 14);
}

TEST(Scenarios, MissingBand) {
  auto names = canonical_band_names();
  names.erase(names.begin() + 6);  // drop B8
  GridSpec g;
  RasterStack r(g, names);
  try {
    select_bands(r, ScenarioId(7));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingBand);
  }
}

TEST(StackBands, ConcatenatesAndRejectsMismatch) {
  GridSpec g;
  g.width = 2;
  RasterStack a(g, {"x"}, {1, 2}), b(g, {"y"}, {3, 4});
  const auto s = stack_bands({a, b});
  EXPECT_EQ(s.band_names(), (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(s.at(1, 0, 1), 4.0f);
  GridSpec g2 = g;
  g2.cell_size_m = 20.0;
  RasterStack c(g2, {"z"}, {1, 2});
  EXPECT_THROW(stack_bands({a, c}), Error);
}

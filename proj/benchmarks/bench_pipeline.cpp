#include <benchmark/benchmark.h>

#include "canopy/composite.hpp"
#include "canopy/experiment.hpp"
#include "canopy/gedi.hpp"
#include "canopy/stereochm.hpp"
#include "canopy/synthscene.hpp"
#include "canopy/trainer.hpp"

using namespace canopy;

namespace {

SceneConfig bench_scene(double extent_m) {
  auto c = desk_config().scene;
  c.extent_m = extent_m;
  return c;
}

void BM_MedianComposite(benchmark::State& state) {
  const auto scene = bench_scene(static_cast<double>(state.range(0)));
  const auto truth = gen_scene(scene);
  const auto [s1, s2] = forward_timeseries(truth, scene, {}, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(median_composite(s1));
    benchmark::DoNotOptimize(median_composite(s2));
  }
  state.SetItemsProcessed(state.iterations() * scene.grid().cell_count());
}
BENCHMARK(BM_MedianComposite)->Arg(2000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_RasterizeFootprints(benchmark::State& state) {
  const auto scene = bench_scene(6000.0);
  const auto truth = gen_scene(scene);
  auto fp_cfg = desk_config().footprints;
  fp_cfg.spacing_across_m = static_cast<double>(state.range(0));
  const auto fp = sample_footprints(truth, scene, fp_cfg, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rasterize_footprints(fp, scene.grid()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(fp.size()));
}
BENCHMARK(BM_RasterizeFootprints)->Arg(600)->Arg(60)->Unit(benchmark::kMillisecond);

// Wall-to-wall inference of the desk network over a square scene.
void BM_PredictMap(benchmark::State& state) {
  const auto cfg = desk_config();
  const auto scene = bench_scene(static_cast<double>(state.range(0)));
  const auto bands = forward_bands(gen_scene(scene), scene, 1);
  auto model_cfg = cfg.model;
  model_cfg.in_channels = bands.band_count();
  const auto model = nn::init_params(model_cfg, 1);
  for (auto _ : state) benchmark::DoNotOptimize(predict_map(model, bands, cfg.predict));
  state.SetItemsProcessed(state.iterations() * scene.grid().cell_count());
}
BENCHMARK(BM_PredictMap)->Arg(2000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_ChmChain(benchmark::State& state) {
  auto c = desk_config().chm;
  c.scene.extent_m = static_cast<double>(state.range(0));
  const auto truth = gen_scene(c.scene);
  const auto cloud = gen_pointcloud(truth, {}, c.cloud, c.seed);
  const auto fine = fine_grid_for(c.scene, c.fine_cell_m);
  for (auto _ : state)
    benchmark::DoNotOptimize(run_chm_chain(cloud.points, fine, c.scene.grid(), c.cloth, c.laplace));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cloud.points.size()));
}
BENCHMARK(BM_ChmChain)->Arg(120)->Arg(240)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

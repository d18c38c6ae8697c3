#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "canopy/checkpoint.hpp"
#include "canopy/composite.hpp"
#include "canopy/error.hpp"
#include "canopy/evalkit.hpp"
#include "canopy/experiment.hpp"
#include "canopy/gedi.hpp"
#include "canopy/parallel.hpp"
#include "canopy/rsf.hpp"
#include "canopy/stereochm.hpp"
#include "canopy/synthscene.hpp"
#include "canopy/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace canopy;

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kMissingDependency = 3, kRuntimeError = 4 };

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::optional<int> scenario;
  std::optional<double> label_fraction;
  std::optional<double> jitter_sigma;
  std::string out = ".";
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--config", o.config, "JSON config (defaults to the built-in desk config)");
  cmd.add_option("--seed", o.seed, "seed override");
  cmd.add_option("--threads", o.threads, "worker threads; 1 is fully deterministic")->check(CLI::PositiveNumber);
  cmd.add_option("--scenario", o.scenario, "input band scenario 1..7");
  cmd.add_option("--label-fraction", o.label_fraction, "fraction of training footprints kept");
  cmd.add_option("--jitter-sigma", o.jitter_sigma, "footprint geolocation jitter sigma in meters");
  cmd.add_option("--out", o.out, "workspace directory");
}

// Paths inside a workspace.
struct Workspace {
  fs::path root;
  fs::path truth() const { return root / "scene" / "truth_height.json"; }
  fs::path tree_cover() const { return root / "scene" / "tree_cover.json"; }
  fs::path stands() const { return root / "scene" / "stands.csv"; }
  fs::path bands() const { return root / "bands.json"; }
  fs::path timeseries() const { return root / "timeseries"; }
  fs::path raw_footprints() const { return root / "footprints_raw.csv"; }
  fs::path footprints() const { return root / "footprints.csv"; }
  fs::path filter_report() const { return root / "filter_report.json"; }
  fs::path tiles() const { return root / "tiles.csv"; }
  fs::path split_report() const { return root / "split.json"; }
  fs::path split_footprints(SplitKind k) const { return root / ("footprints_" + to_string(k) + ".csv"); }
  fs::path labels(SplitKind k) const { return root / ("labels_" + to_string(k) + ".json"); }
  fs::path model_dir() const { return root / "model"; }
  fs::path checkpoint() const { return model_dir() / "checkpoint.json"; }
  fs::path prediction() const { return root / "prediction.json"; }
  fs::path eval_dir() const { return root / "eval"; }
  fs::path cloud() const { return root / "pointcloud" / "cloud.csv"; }
  fs::path cloud_truth() const { return root / "pointcloud" / "truth_height.json"; }
  fs::path chm_dir() const { return root / "chm"; }
};

ExperimentConfig resolve_config(const CommonOptions& o) {
  auto c = o.config.empty() ? desk_config() : load_experiment_config(o.config);
  if (o.scenario) {
    require(*o.scenario >= 1 && *o.scenario <= 7, ErrorCode::InvalidConfig, "--scenario must be in 1..7");
    c.train.scenario = *o.scenario;
  }
  if (o.label_fraction) {
    require(*o.label_fraction > 0.0 && *o.label_fraction <= 1.0, ErrorCode::InvalidConfig,
            "--label-fraction must be in (0, 1]");
    c.train.label_fraction = *o.label_fraction;
  }
  if (o.jitter_sigma) {
    require(*o.jitter_sigma >= 0.0, ErrorCode::InvalidConfig, "--jitter-sigma must be non-negative");
    c.footprints.jitter_sigma_m = *o.jitter_sigma;
  }
  return c;
}

void need(const fs::path& path, const std::string& producer) {
  require(fs::exists(path), ErrorCode::MissingDependency,
          path.string() + " not found; run `canopy " + producer + "` first");
}

// Records which command produced the workspace artifacts and under which config.
void log_command(const Workspace& ws, const std::string& command, const ExperimentConfig& config,
                 const CommonOptions& o, const std::vector<fs::path>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["config_hash"] = experiment_hash(config);
  if (o.seed) j["seed"] = *o.seed;
  j["threads"] = o.threads;
  auto files = nlohmann::json::array();
  for (const auto& p : outputs) files.push_back(fs::relative(p, ws.root).generic_string());
  j["outputs"] = files;
  const auto path = ws.root / "logs" / (command + ".json");
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_stands_csv(const std::vector<Stand>& stands, const fs::path& path) {
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << "stand_id,row,col,rows,cols,mean_height_m,bare\n";
  for (std::size_t i = 0; i < stands.size(); ++i) {
    const auto& s = stands[i];
    out << i << ',' << s.cells.row << ',' << s.cells.col << ',' << s.cells.rows << ',' << s.cells.cols << ','
        << s.mean_height_m << ',' << (s.bare ? 1 : 0) << '\n';
  }
}

// Time series epochs are stored one RSF per acquisition; invalid pixels hold nodata.
void write_series(const TimeSeriesStack& series, const fs::path& dir, const std::string& family) {
  const auto cells = static_cast<std::size_t>(series.spec.cell_count());
  for (std::size_t e = 0; e < series.epochs.size(); ++e) {
    const auto& epoch = series.epochs[e];
    std::vector<float> values = epoch.values;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (!epoch.valid[i % cells]) values[i] = series.nodata;
    RasterStack stack(series.spec, series.band_names, std::move(values), series.nodata);
    char name[32];
    std::snprintf(name, sizeof(name), "%s_%03zu.json", family.c_str(), e);
    write_rsf(stack, dir / name);
  }
}

TimeSeriesStack read_series(const fs::path& dir, const std::string& family) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind(family + "_", 0) == 0 && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorCode::MissingDependency, "no " + family + " acquisitions in " + dir.string());
  TimeSeriesStack series;
  for (std::size_t e = 0; e < files.size(); ++e) {
    auto stack = read_rsf(files[e]);
    if (e == 0) {
      series.spec = stack.spec();
      series.band_names = stack.band_names();
      series.nodata = stack.nodata();
    }
    require(stack.spec() == series.spec && stack.band_names() == series.band_names, ErrorCode::GridMismatch,
            files[e].string() + " does not match the first acquisition");
    const auto cells = static_cast<std::size_t>(series.spec.cell_count());
    Epoch epoch;
    epoch.timestamp = static_cast<std::int64_t>(e);
    epoch.valid.assign(cells, 1);
    const auto v = stack.values();
    for (std::size_t i = 0; i < v.size(); ++i)
      if (stack.is_nodata(v[i])) epoch.valid[i % cells] = 0;
    epoch.values.assign(v.begin(), v.end());
    series.epochs.push_back(std::move(epoch));
  }
  series.validate();
  return series;
}

int cmd_synth(const CommonOptions& o, bool timeseries, bool pointcloud) {
  auto c = resolve_config(o);
  if (o.seed) c.scene.seed = *o.seed;
  const Workspace ws{o.out};
  std::vector<fs::path> outputs;
  const auto truth = gen_scene(c.scene);
  write_rsf(truth.height, ws.truth());
  write_rsf(truth.tree_cover, ws.tree_cover());
  write_stands_csv(truth.stands, ws.stands());
  outputs.insert(outputs.end(), {ws.truth(), ws.tree_cover(), ws.stands()});
  if (timeseries) {
    const auto [s1, s2] = forward_timeseries(truth, c.scene, {}, c.band_seed);
    fs::create_directories(ws.timeseries());
    write_series(s1, ws.timeseries(), "s1");
    write_series(s2, ws.timeseries(), "s2");
    outputs.push_back(ws.timeseries());
  } else {
    write_rsf(forward_bands(truth, c.scene, c.band_seed), ws.bands());
    outputs.push_back(ws.bands());
  }
  const auto footprints = sample_footprints(truth, c.scene, c.footprints, c.footprint_seed);
  write_footprints_csv(footprints, ws.raw_footprints());
  outputs.push_back(ws.raw_footprints());
  if (pointcloud) {
    const auto chm_truth = gen_scene(c.chm.scene);
    const auto cloud = gen_pointcloud(chm_truth, {}, c.chm.cloud, c.chm.seed);
    write_point_cloud_csv(cloud.points, ws.cloud());
    write_rsf(chm_truth.height, ws.cloud_truth());
    outputs.insert(outputs.end(), {ws.cloud(), ws.cloud_truth()});
  }
  log_command(ws, "synth", c, o, outputs);
  std::cout << "synth: " << truth.stands.size() << " stands, " << footprints.size() << " footprints\n";
  return kOk;
}

int cmd_composite(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const Workspace ws{o.out};
  need(ws.timeseries(), "synth --timeseries");
  const auto s1 = normalize_s1(median_composite(read_series(ws.timeseries(), "s1")));
  const auto s2 = normalize_s2(median_composite(read_series(ws.timeseries(), "s2")));
  auto stacked = stack_bands({s2, s1});
  write_rsf(select_bands(stacked, canonical_band_names()), ws.bands());
  log_command(ws, "composite", c, o, {ws.bands()});
  std::cout << "composite: " << stacked.band_count() << " bands\n";
  return kOk;
}

int cmd_filter(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const Workspace ws{o.out};
  need(ws.raw_footprints(), "synth");
  const auto raw = read_footprints_csv(ws.raw_footprints());
  const auto report = filter_footprints(raw);
  write_filter_report(report, ws.filter_report());
  write_footprints_csv(kept_records(raw, report), ws.footprints());
  log_command(ws, "filter", c, o, {ws.filter_report(), ws.footprints()});
  std::cout << "filter: kept " << report.kept.size() << " of " << raw.size() << '\n';
  return kOk;
}

constexpr SplitKind kSplits[3] = {SplitKind::Train, SplitKind::Validation, SplitKind::Test};

int cmd_split(const CommonOptions& o) {
  auto c = resolve_config(o);
  if (o.seed) c.split_seed = *o.seed;
  const Workspace ws{o.out};
  need(ws.footprints(), "filter");
  need(ws.tree_cover(), "synth");
  const auto kept = read_footprints_csv(ws.footprints());
  const auto grid = read_rsf(ws.tree_cover()).spec();
  auto tiles = make_tiles(grid.bounds(), c.tile_size_m);
  const auto counts = count_per_tile(tiles, kept);
  const auto split = split_tiles(tiles, counts, c.split, c.split_seed);
  for (std::size_t i = 0; i < tiles.size(); ++i) tiles[i].assignment = split.per_tile[i];
  write_tiles_csv(tiles, ws.tiles());
  std::vector<fs::path> outputs = {ws.tiles(), ws.split_report()};
  for (auto k : kSplits) {
    write_footprints_csv(footprints_in_split(kept, tiles, split.per_tile, k), ws.split_footprints(k));
    outputs.push_back(ws.split_footprints(k));
  }
  nlohmann::json j;
  j["footprints"] = {{"train", split.footprints[0]}, {"validation", split.footprints[1]}, {"test", split.footprints[2]}};
  j["achieved"] = {{"train", split.achieved[0]}, {"validation", split.achieved[1]}, {"test", split.achieved[2]}};
  j["max_abs_deviation"] = split.max_abs_deviation;
  j["l1_deviation"] = split.l1_deviation;
  std::ofstream(ws.split_report()) << j.dump(2) << '\n';
  log_command(ws, "split", c, o, outputs);
  std::cout << "split: " << split.footprints[0] << " train, " << split.footprints[1] << " validation, "
            << split.footprints[2] << " test footprints\n";
  return kOk;
}

int cmd_rasterize(const CommonOptions& o) {
  auto c = resolve_config(o);
  if (o.seed) c.train.seed = *o.seed;
  const Workspace ws{o.out};
  need(ws.tree_cover(), "synth");
  for (auto k : {SplitKind::Train, SplitKind::Validation}) need(ws.split_footprints(k), "split");
  const auto cover = read_rsf(ws.tree_cover());
  const auto grid = label_grid(c, cover.spec());
  std::vector<fs::path> outputs;
  for (auto k : {SplitKind::Train, SplitKind::Validation}) {
    auto fp = mask_nonforest(read_footprints_csv(ws.split_footprints(k)), cover).kept;
    if (k == SplitKind::Train) fp = subsample_footprints(fp, c.train.label_fraction, c.train.seed);
    const auto r = rasterize_footprints(fp, grid);
    write_labels_rsf(r.labels, ws.labels(k));
    outputs.push_back(ws.labels(k));
    std::cout << "rasterize: " << to_string(k) << ' ' << r.labels.size() << " labeled pixels\n";
  }
  log_command(ws, "rasterize", c, o, outputs);
  return kOk;
}

// Mirrors build_train_data on workspace artifacts.
TrainData load_train_data(const Workspace& ws, const ExperimentConfig& c) {
  TrainData d;
  d.input = select_bands(read_rsf(ws.bands()), ScenarioId(c.train.scenario));
  d.train_labels = read_labels_rsf(ws.labels(SplitKind::Train));
  d.val_labels = read_labels_rsf(ws.labels(SplitKind::Validation));
  const auto grid = label_grid(c, d.input.spec());
  require(d.train_labels.spec() == grid && d.val_labels.spec() == grid, ErrorCode::GridMismatch,
          "label rasters do not match the model output grid; rerun `canopy rasterize` with this config");
  const int s = c.model.output_stride();
  for (const auto& t : read_tiles_csv(ws.tiles())) {
    const auto rect = tile_cells(d.input.spec(), t.bounds);
    if (t.assignment == SplitKind::Train) {
      const CellRect lr{rect.row / s, rect.col / s, rect.rows / s, rect.cols / s};
      d.train_tiles.push_back({rect, static_cast<std::int64_t>(d.train_labels.count_in(lr))});
    } else if (t.assignment == SplitKind::Validation) {
      d.val_regions.push_back(rect);
    }
  }
  return d;
}

int cmd_train(const CommonOptions& o) {
  auto c = resolve_config(o);
  if (o.seed) c.train.seed = *o.seed;
  const Workspace ws{o.out};
  need(ws.bands(), "synth");
  need(ws.tiles(), "split");
  for (auto k : {SplitKind::Train, SplitKind::Validation}) need(ws.labels(k), "rasterize");
  const auto data = load_train_data(ws, c);
  const auto model = run_model_config(c);
  const auto t0 = std::chrono::steady_clock::now();
  auto result = train(nn::init_params(model, c.train.seed), data, c.train, c.predict, [](const EpochRecord& e) {
    std::cout << "epoch " << e.epoch;
    if (e.val_mae) std::cout << " val_mae " << *e.val_mae;
    std::cout << '\n' << std::flush;
  });
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_train_log(result.log, ws.model_dir());
  nn::save_model(result.best, ws.checkpoint());
  nlohmann::json info;
  info["seed"] = result.log.seed;
  info["config_hash"] = result.log.config_hash;
  info["best_epoch"] = result.log.best_epoch;
  info["stopped_early"] = result.log.stopped_early;
  info["skipped_steps"] = result.log.skipped_steps;
  // Kept apart from the checkpoint and logs, which are bit-reproducible.
  info["wall_clock_s"] = wall;
  std::ofstream(ws.model_dir() / "run_info.json") << info.dump(2) << '\n';
  save_experiment_config(c, ws.model_dir() / "config.json");
  log_command(ws, "train", c, o, {ws.checkpoint(), ws.model_dir() / "train_steps.csv",
                                  ws.model_dir() / "val_epochs.csv", ws.model_dir() / "run_info.json"});
  std::cout << "train: best epoch " << result.log.best_epoch << '\n';
  return kOk;
}

int cmd_predict(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const Workspace ws{o.out};
  need(ws.checkpoint(), "train");
  need(ws.bands(), "synth");
  const auto model = nn::load_model(ws.checkpoint());
  const auto bands = read_rsf(ws.bands());
  require(model.config.in_channels == static_cast<int>(scenario_bands(ScenarioId(c.train.scenario)).size()),
          ErrorCode::CheckpointMismatch, "checkpoint input channels do not match --scenario");
  const auto input = select_bands(bands, ScenarioId(c.train.scenario));
  write_rsf(predict_on_input_grid(model, input, c.predict), ws.prediction());
  log_command(ws, "predict", c, o, {ws.prediction()});
  std::cout << "predict: wrote " << ws.prediction().string() << '\n';
  return kOk;
}

int cmd_eval(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const Workspace ws{o.out};
  need(ws.prediction(), "predict");
  need(ws.split_footprints(SplitKind::Test), "split");
  need(ws.tree_cover(), "synth");
  const auto prediction = read_rsf(ws.prediction());
  const auto test = read_footprints_csv(ws.split_footprints(SplitKind::Test));
  const auto ev = evaluate_test_footprints(prediction, test, read_rsf(ws.tree_cover()));
  const std::vector<DatasetReport> reports = {{"test", c.train.scenario, ev.report, ev.bins}};
  emit_report(reports, ws.eval_dir());
  log_command(ws, "eval", c, o, {ws.eval_dir() / "metrics.csv", ws.eval_dir() / "bin_stats.json"});
  std::cout << "eval: n " << ev.report.n << " mae " << ev.report.mae << " rmse " << ev.report.rmse << '\n';
  return kOk;
}

int cmd_chm(const CommonOptions& o) {
  const auto c = resolve_config(o);
  const Workspace ws{o.out};
  need(ws.cloud(), "synth --pointcloud");
  const auto points = read_point_cloud_csv(ws.cloud());
  const auto out = run_chm_chain(points, fine_grid_for(c.chm.scene, c.chm.fine_cell_m), c.chm.scene.grid(),
                                 c.chm.cloth, c.chm.laplace);
  const auto dir = ws.chm_dir();
  write_rsf(out.dsm, dir / "dsm.json");
  write_rsf(out.dtm.dtm, dir / "dtm.json");
  write_rsf(out.chm_fine, dir / "chm_fine.json");
  write_rsf(out.chm_10m, dir / "chm.json");
  std::size_t ground = 0;
  for (auto l : out.cloth.labels) ground += l == PointClass::Ground ? 1 : 0;
  nlohmann::json j;
  j["points"] = points.size();
  j["ground_points"] = ground;
  j["cloth_converged"] = out.cloth.converged;
  j["cloth_steps"] = out.cloth.steps;
  j["dtm_converged"] = out.dtm.converged;
  j["dtm_sweeps"] = out.dtm.sweeps;
  j["dtm_residual_m"] = out.dtm.residual_m;
  std::ofstream(dir / "chm_report.json") << j.dump(2) << '\n';
  log_command(ws, "chm", c, o,
              {dir / "dsm.json", dir / "dtm.json", dir / "chm_fine.json", dir / "chm.json", dir / "chm_report.json"});
  std::cout << "chm: " << ground << " of " << points.size() << " points classified as ground\n";
  return kOk;
}

void print_rows(const std::vector<SweepRow>& rows) {
  for (const auto& r : rows) {
    std::cout << "scenario " << r.scenario << " fraction " << r.label_fraction << ' ';
    if (r.test)
      std::cout << "test_mae " << r.test->mae << '\n';
    else
      std::cout << "skipped (" << r.note << ")\n";
  }
}

int cmd_scenario_sweep(const CommonOptions& o) {
  auto c = resolve_config(o);
  if (o.seed) c.train.seed = *o.seed;
  const Workspace ws{o.out};
  const auto dir = ws.root / "scenario_sweep";
  print_rows(scenario_sweep(c, dir));
  log_command(ws, "scenario-sweep", c, o, {dir / "metrics.csv", dir / "bin_stats.json"});
  return kOk;
}

int cmd_subsample_sweep(const CommonOptions& o) {
  auto c = resolve_config(o);
  if (o.seed) c.train.seed = *o.seed;
  const Workspace ws{o.out};
  const auto dir = ws.root / "subsample_sweep";
  print_rows(subsample_sweep(c, kSubsampleFractions, dir));
  log_command(ws, "subsample-sweep", c, o, {dir / "metrics.csv", dir / "subsample_mae.csv"});
  return kOk;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidFraction:
      return kConfigError;
    case ErrorCode::MissingDependency:
      return kMissingDependency;
    default:
      return kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-to-dense canopy height pipeline"};
  app.require_subcommand(1);
  CommonOptions o;
  bool timeseries = false, pointcloud = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene, bands and footprints");
  synth->add_flag("--timeseries", timeseries, "write raw acquisitions instead of composited bands");
  synth->add_flag("--pointcloud", pointcloud, "also write a point cloud over the CHM scene");
  auto* composite = app.add_subcommand("composite", "median-composite and normalize acquisitions");
  auto* filter = app.add_subcommand("filter", "apply footprint quality rules");
  auto* split = app.add_subcommand("split", "assign 1 km tiles to train/validation/test");
  auto* rasterize = app.add_subcommand("rasterize", "mask non-forest footprints and rasterize labels");
  auto* train_cmd = app.add_subcommand("train", "train the U-Net on rasterized labels");
  auto* predict = app.add_subcommand("predict", "predict a wall-to-wall height map");
  auto* eval = app.add_subcommand("eval", "score the prediction against test footprints");
  auto* chm_cmd = app.add_subcommand("chm", "point cloud to canopy height model");
  auto* scen = app.add_subcommand("scenario-sweep", "train and evaluate scenarios 1..7");
  auto* sub = app.add_subcommand("subsample-sweep", "train and evaluate label fractions 1, 0.1, 0.01, 0.001");
  for (auto* cmd : app.get_subcommands({})) add_common(*cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    set_num_threads(o.threads);
    if (synth->parsed()) return cmd_synth(o, timeseries, pointcloud);
    if (composite->parsed()) return cmd_composite(o);
    if (filter->parsed()) return cmd_filter(o);
    if (split->parsed()) return cmd_split(o);
    if (rasterize->parsed()) return cmd_rasterize(o);
    if (train_cmd->parsed()) return cmd_train(o);
    if (predict->parsed()) return cmd_predict(o);
    if (eval->parsed()) return cmd_eval(o);
    if (chm_cmd->parsed()) return cmd_chm(o);
    if (scen->parsed()) return cmd_scenario_sweep(o);
    if (sub->parsed()) return cmd_subsample_sweep(o);
  } catch (const Error& e) {
    std::cerr << "canopy: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "canopy: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kConfigError;
}

#include "canopy/experiment.hpp"

#include <cmath>
#include <fstream>

#include "canopy/checkpoint.hpp"
#include "canopy/composite.hpp"
#include "canopy/error.hpp"
#include "canopy/text_io.hpp"

namespace canopy {

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.footprints.jitter_sigma_m = 10.0;
  c.footprints.invalid_fraction = 0.05;
  c.model.base_channels = 8;
  c.model.depth = 3;
  c.model.use_batchnorm = true;
  c.train.window_cells = 64;
  c.train.batch_size = 8;
  c.train.batches_per_epoch = 16;
  c.train.lr_max = 0.05;
  c.train.lr_halfcycle_steps = 80;
  c.train.max_epochs = 30;
  c.train.early_stop_patience = 10;
  c.predict.tile_cells = 384;

  auto& chm = c.chm;
  chm.scene.seed = 11;
  chm.scene.extent_m = 400.0;
  chm.scene.stand_min_m = 80.0;
  chm.scene.stand_max_m = 200.0;
  chm.scene.stand_snap_m = 40.0;
  chm.scene.height_min_m = 14.5;
  chm.scene.height_max_m = 15.5;
  chm.scene.bare_fraction = 0.4;
  chm.scene.texture_sigma_m = 0.0;
  chm.seed = 12;
  return c;
}

PreparedScene prepare_scene(const ExperimentConfig& config) {
  PreparedScene p;
  p.truth = gen_scene(config.scene);
  p.bands = forward_bands(p.truth, config.scene, config.band_seed);
  p.raw = sample_footprints(p.truth, config.scene, config.footprints, config.footprint_seed);
  p.filter = filter_footprints(p.raw);
  p.kept = kept_records(p.raw, p.filter);
  p.tiles = make_tiles(p.truth.height.spec().bounds(), config.tile_size_m);
  const auto counts = count_per_tile(p.tiles, p.kept);
  p.split = split_tiles(p.tiles, counts, config.split, config.split_seed);
  for (std::size_t i = 0; i < p.tiles.size(); ++i) p.tiles[i].assignment = p.split.per_tile[i];
  const SplitKind kinds[3] = {SplitKind::Train, SplitKind::Validation, SplitKind::Test};
  for (int k = 0; k < 3; ++k) {
    const auto in_split = footprints_in_split(p.kept, p.tiles, p.split.per_tile, kinds[k]);
    p.by_split[static_cast<std::size_t>(k)] = mask_nonforest(in_split, p.truth.tree_cover).kept;
  }
  return p;
}

nn::UNetConfig run_model_config(const ExperimentConfig& config) {
  auto m = config.model;
  m.in_channels = static_cast<int>(scenario_bands(ScenarioId(config.train.scenario)).size());
  return m;
}

GridSpec label_grid(const ExperimentConfig& config, const GridSpec& input_grid) {
  const int s = config.model.output_stride();
  GridSpec g = input_grid;
  g.cell_size_m *= s;
  g.width /= s;
  g.height /= s;
  return g;
}

namespace {

std::vector<CellRect> tile_rects(const PreparedScene& scene, SplitKind kind) {
  std::vector<CellRect> rects;
  for (const auto& t : scene.tiles)
    if (t.assignment == kind) rects.push_back(tile_cells(scene.bands.spec(), t.bounds));
  return rects;
}

}  // namespace

TrainData build_train_data(const PreparedScene& scene, const ExperimentConfig& config) {
  TrainData d;
  d.input = select_bands(scene.bands, ScenarioId(config.train.scenario));
  const auto grid = label_grid(config, d.input.spec());
  const auto train_fp = subsample_footprints(scene.by_split[0], config.train.label_fraction, config.train.seed);
  d.train_labels = rasterize_footprints(train_fp, grid).labels;
  d.val_labels = rasterize_footprints(scene.by_split[1], grid).labels;
  const int s = config.model.output_stride();
  for (const auto& rect : tile_rects(scene, SplitKind::Train)) {
    const CellRect lr{rect.row / s, rect.col / s, rect.rows / s, rect.cols / s};
    const auto n = static_cast<std::int64_t>(d.train_labels.count_in(lr));
    d.train_tiles.push_back({rect, n});
  }
  d.val_regions = tile_rects(scene, SplitKind::Validation);
  return d;
}

double oracle_val_mae(const PreparedScene& scene, const ExperimentConfig& config) {
  auto oracle = invert_bands(noiseless_bands(scene.truth.height));
  const auto grid = label_grid(config, oracle.spec());
  if (!(grid == oracle.spec())) oracle = resample_max(oracle, grid);
  const auto labels = rasterize_footprints(scene.by_split[1], grid).labels;
  const auto mae = label_mae(oracle, labels);
  if (!mae) fail(ErrorCode::NoLabels, "no validation labels for the oracle");
  return *mae;
}

RasterStack predict_on_input_grid(const nn::ModelState& model, const RasterStack& input,
                                  const PredictOptions& options, std::span<const CellRect> roi) {
  if (model.config.output_stride() == 1) return predict_map(model, input, options, roi);
  return upsample_bilinear_raster(predict_map(model, input, options, roi), model.config.output_stride());
}

RunOutcome run_experiment(const PreparedScene& scene, const ExperimentConfig& config) {
  const auto data = build_train_data(scene, config);
  const auto model = run_model_config(config);
  const auto initial = nn::init_params(model, config.train.seed);
  RunOutcome out;
  out.trained = train(initial, data, config.train, config.predict);
  for (const auto& e : out.trained.log.epochs)
    if (e.val_mae && (!out.best_val_mae || *e.val_mae < *out.best_val_mae)) out.best_val_mae = e.val_mae;
  // 20 m heads are predicted on the whole map so the upsampling has neighbours.
  const auto roi = tile_rects(scene, SplitKind::Test);
  out.test_prediction = predict_on_input_grid(out.trained.best, data.input, config.predict,
                                              model.output_stride() == 1 ? std::span<const CellRect>(roi)
                                                                         : std::span<const CellRect>());
  out.test = evaluate_test_footprints(out.test_prediction, scene.by_split[2], scene.truth.tree_cover);
  return out;
}

namespace {

void write_run(const RunOutcome& run, const std::filesystem::path& dir) {
  write_train_log(run.trained.log, dir);
  nn::save_model(run.trained.best, dir / "checkpoint.json");
}

SweepRow run_row(const PreparedScene& scene, const ExperimentConfig& config, const std::filesystem::path& dir) {
  SweepRow row;
  row.scenario = config.train.scenario;
  row.label_fraction = config.train.label_fraction;
  row.jitter_sigma_m = config.footprints.jitter_sigma_m;
  try {
    const auto run = run_experiment(scene, config);
    row.test = run.test.report;
    row.bins = run.test.bins;
    row.best_val_mae = run.best_val_mae;
    if (!dir.empty()) write_run(run, dir);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoLabels && e.code() != ErrorCode::EmptyEvaluation) throw;
    row.note = e.what();
  }
  return row;
}

}  // namespace

std::vector<SweepRow> scenario_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const auto scene = prepare_scene(config);
  std::vector<SweepRow> rows;
  std::vector<DatasetReport> reports;
  for (int s = 1; s <= 7; ++s) {
    auto c = config;
    c.train.scenario = s;
    const auto dir = out_dir.empty() ? out_dir : out_dir / ("scenario_" + std::to_string(s));
    rows.push_back(run_row(scene, c, dir));
    reports.push_back({"test", s, rows.back().test.value_or(MetricReport{}), rows.back().bins});
  }
  if (!out_dir.empty()) emit_report(reports, out_dir);
  return rows;
}

std::vector<SweepRow> subsample_sweep(const ExperimentConfig& config, std::span<const double> fractions,
                                      const std::filesystem::path& out_dir) {
  const auto scene = prepare_scene(config);
  std::vector<SweepRow> rows;
  std::vector<DatasetReport> reports;
  for (double f : fractions) {
    auto c = config;
    c.train.label_fraction = f;
    const auto tag = detail::format_double(f);
    const auto dir = out_dir.empty() ? out_dir : out_dir / ("fraction_" + tag);
    rows.push_back(run_row(scene, c, dir));
    if (rows.back().test) reports.push_back({"test_fraction_" + tag, c.train.scenario, *rows.back().test, rows.back().bins});
  }
  if (!out_dir.empty()) {
    emit_report(reports, out_dir);
    std::ofstream out(out_dir / "subsample_mae.csv");
    require(bool(out), ErrorCode::IoError, "cannot write subsample_mae.csv");
    for (std::size_t i = 0; i < rows.size(); ++i) out << (i ? "," : "") << detail::format_double(rows[i].label_fraction);
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i)
      out << (i ? "," : "") << (rows[i].test ? detail::format_double(rows[i].test->mae) : std::string());
    out << '\n';
    require(bool(out), ErrorCode::IoError, "write failed for subsample_mae.csv");
  }
  return rows;
}

GridSpec fine_grid_for(const SceneConfig& scene, double fine_cell_m) {
  require(fine_cell_m > 0.0, ErrorCode::InvalidConfig, "fine cell size must be positive");
  GridSpec g;
  g.origin_x_m = 0.0;
  g.origin_y_m = scene.extent_m;
  g.cell_size_m = fine_cell_m;
  g.width = g.height = static_cast<int>(std::floor(scene.extent_m / fine_cell_m + 1e-9));
  g.validate();
  return g;
}

ChmOutcome run_chm_chain(const PointCloud& points, const GridSpec& fine_grid, const GridSpec& coarse_grid,
                         const ClothParams& cloth, const LaplaceOptions& laplace) {
  ChmOutcome out;
  out.cloth = cloth_ground_filter(points, cloth);
  PointCloud ground;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (out.cloth.labels[i] == PointClass::Ground) ground.push_back(points[i]);
  out.dsm = rasterize_dsm(points, fine_grid);
  out.dtm = laplace_dtm(ground, fine_grid, laplace);
  out.chm_fine = chm(out.dsm, out.dtm.dtm);
  out.chm_10m = chm_to_grid(out.chm_fine, coarse_grid);
  return out;
}

}  // namespace canopy

#include <algorithm>
#include <fstream>

#include "canopy/error.hpp"
#include "canopy/experiment.hpp"
#include "json_convert.hpp"

namespace canopy {

using nlohmann::json;

void to_json(json& j, const SceneConfig& c) {
  j = {{"seed", c.seed},
       {"extent_m", c.extent_m},
       {"cell_size_m", c.cell_size_m},
       {"stand_min_m", c.stand_min_m},
       {"stand_max_m", c.stand_max_m},
       {"height_min_m", c.height_min_m},
       {"height_max_m", c.height_max_m},
       {"bare_fraction", c.bare_fraction},
       {"texture_sigma_m", c.texture_sigma_m},
       {"s1_speckle_sigma", c.s1_speckle_sigma},
       {"s2_noise_sigma", c.s2_noise_sigma},
       {"rh_floor_m", c.rh_floor_m},
       {"stand_snap_m", c.stand_snap_m}};
}

void from_json(const json& j, SceneConfig& c) {
  get_if(j, "seed", c.seed);
  get_if(j, "extent_m", c.extent_m);
  get_if(j, "cell_size_m", c.cell_size_m);
  get_if(j, "stand_min_m", c.stand_min_m);
  get_if(j, "stand_max_m", c.stand_max_m);
  get_if(j, "height_min_m", c.height_min_m);
  get_if(j, "height_max_m", c.height_max_m);
  get_if(j, "bare_fraction", c.bare_fraction);
  get_if(j, "texture_sigma_m", c.texture_sigma_m);
  get_if(j, "s1_speckle_sigma", c.s1_speckle_sigma);
  get_if(j, "s2_noise_sigma", c.s2_noise_sigma);
  get_if(j, "rh_floor_m", c.rh_floor_m);
  get_if(j, "stand_snap_m", c.stand_snap_m);
}

void to_json(json& j, const FootprintConfig& c) {
  j = {{"spacing_along_m", c.spacing_along_m},
       {"spacing_across_m", c.spacing_across_m},
       {"jitter_sigma_m", c.jitter_sigma_m},
       {"invalid_fraction", c.invalid_fraction},
       {"footprint_diameter_m", c.footprint_diameter_m}};
}

void from_json(const json& j, FootprintConfig& c) {
  get_if(j, "spacing_along_m", c.spacing_along_m);
  get_if(j, "spacing_across_m", c.spacing_across_m);
  get_if(j, "jitter_sigma_m", c.jitter_sigma_m);
  get_if(j, "invalid_fraction", c.invalid_fraction);
  get_if(j, "footprint_diameter_m", c.footprint_diameter_m);
}

void to_json(json& j, const SplitFractions& c) {
  j = {{"train", c.train}, {"validation", c.validation}, {"test", c.test}};
}

void from_json(const json& j, SplitFractions& c) {
  get_if(j, "train", c.train);
  get_if(j, "validation", c.validation);
  get_if(j, "test", c.test);
}

void to_json(json& j, const PointCloudConfig& c) {
  j = {{"density_pts_per_m2", c.density_pts_per_m2},
       {"vertical_noise_m", c.vertical_noise_m},
       {"understory_ground_fraction", c.understory_ground_fraction}};
}

void from_json(const json& j, PointCloudConfig& c) {
  get_if(j, "density_pts_per_m2", c.density_pts_per_m2);
  get_if(j, "vertical_noise_m", c.vertical_noise_m);
  get_if(j, "understory_ground_fraction", c.understory_ground_fraction);
}

void to_json(json& j, const ClothParams& c) {
  j = {{"cloth_cell_m", c.cloth_cell_m},
       {"rigidness", c.rigidness},
       {"gravity_step_m", c.gravity_step_m},
       {"max_steps", c.max_steps},
       {"epsilon_m", c.epsilon_m},
       {"classification_threshold_m", c.classification_threshold_m},
       {"initial_clearance_m", c.initial_clearance_m}};
}

void from_json(const json& j, ClothParams& c) {
  get_if(j, "cloth_cell_m", c.cloth_cell_m);
  get_if(j, "rigidness", c.rigidness);
  get_if(j, "gravity_step_m", c.gravity_step_m);
  get_if(j, "max_steps", c.max_steps);
  get_if(j, "epsilon_m", c.epsilon_m);
  get_if(j, "classification_threshold_m", c.classification_threshold_m);
  get_if(j, "initial_clearance_m", c.initial_clearance_m);
}

void to_json(json& j, const LaplaceOptions& c) {
  j = {{"tolerance_m", c.tolerance_m}, {"max_sweeps", c.max_sweeps}};
}

void from_json(const json& j, LaplaceOptions& c) {
  get_if(j, "tolerance_m", c.tolerance_m);
  get_if(j, "max_sweeps", c.max_sweeps);
}

void to_json(json& j, const ChmSceneConfig& c) {
  j = {{"scene", c.scene},
       {"cloud", c.cloud},
       {"cloth", c.cloth},
       {"laplace", c.laplace},
       {"fine_cell_m", c.fine_cell_m},
       {"seed", c.seed}};
}

void from_json(const json& j, ChmSceneConfig& c) {
  if (j.contains("scene")) from_json(j.at("scene"), c.scene);
  if (j.contains("cloud")) from_json(j.at("cloud"), c.cloud);
  if (j.contains("cloth")) from_json(j.at("cloth"), c.cloth);
  if (j.contains("laplace")) from_json(j.at("laplace"), c.laplace);
  get_if(j, "fine_cell_m", c.fine_cell_m);
  get_if(j, "seed", c.seed);
}

void to_json(json& j, const ExperimentConfig& c) {
  j = {{"scene", c.scene},
       {"footprints", c.footprints},
       {"band_seed", c.band_seed},
       {"footprint_seed", c.footprint_seed},
       {"tile_size_m", c.tile_size_m},
       {"split", c.split},
       {"split_seed", c.split_seed},
       {"model", c.model},
       {"train", c.train},
       {"predict", c.predict},
       {"chm", c.chm}};
}

namespace {

// Applies keys present in `j` on top of the defaults already in `c`.
void merge(const json& j, ExperimentConfig& c) {
  require(j.is_object(), ErrorCode::InvalidConfig, "config root must be a JSON object");
  static const char* kKnown[] = {"scene",      "footprints", "band_seed", "footprint_seed", "tile_size_m", "split",
                                 "split_seed", "model",      "train",     "predict",        "chm"};
  for (const auto& [key, _] : j.items())
    require(std::find(std::begin(kKnown), std::end(kKnown), key) != std::end(kKnown), ErrorCode::InvalidConfig,
            "unknown config key '" + key + "'");
  if (j.contains("scene")) from_json(j.at("scene"), c.scene);
  if (j.contains("footprints")) from_json(j.at("footprints"), c.footprints);
  get_if(j, "band_seed", c.band_seed);
  get_if(j, "footprint_seed", c.footprint_seed);
  get_if(j, "tile_size_m", c.tile_size_m);
  if (j.contains("split")) from_json(j.at("split"), c.split);
  get_if(j, "split_seed", c.split_seed);
  if (j.contains("model")) {
    json m = c.model;
    m.update(j.at("model"));
    c.model = m.get<nn::UNetConfig>();
  }
  if (j.contains("train")) {
    json t = c.train;
    t.update(j.at("train"));
    c.train = t.get<TrainConfig>();
  }
  if (j.contains("predict")) {
    json p = c.predict;
    p.update(j.at("predict"));
    c.predict = p.get<PredictOptions>();
  }
  if (j.contains("chm")) from_json(j.at("chm"), c.chm);
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::InvalidConfig, "cannot open config " + path.string());
  ExperimentConfig c = desk_config();
  try {
    json j;
    in >> j;
    merge(j, c);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  c.scene.validate();
  c.model.validate();
  return c;
}

void save_experiment_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << json(config).dump(2) << '\n';
  require(bool(out), ErrorCode::IoError, "write failed for " + path.string());
}

std::string experiment_hash(const ExperimentConfig& config) { return json_digest(json(config)); }

}  // namespace canopy

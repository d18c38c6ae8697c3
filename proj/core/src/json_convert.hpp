#pragma once

// nlohmann adapters for config structs. Private to the library.

#include "canopy/unet.hpp"
#include "json.hpp"

namespace canopy::nn {

inline void to_json(nlohmann::json& j, const UNetConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"base_channels", c.base_channels},
       {"depth", c.depth},
       {"head", to_string(c.head)},
       {"use_batchnorm", c.use_batchnorm}};
}

inline void from_json(const nlohmann::json& j, UNetConfig& c) {
  c = UNetConfig{};
  if (j.contains("in_channels")) j.at("in_channels").get_to(c.in_channels);
  if (j.contains("base_channels")) j.at("base_channels").get_to(c.base_channels);
  if (j.contains("depth")) j.at("depth").get_to(c.depth);
  if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
  if (j.contains("use_batchnorm")) j.at("use_batchnorm").get_to(c.use_batchnorm);
}

}  // namespace canopy::nn

#include "canopy/trainer.hpp"

namespace canopy {

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"window_cells", c.window_cells},
       {"batch_size", c.batch_size},
       {"batches_per_epoch", c.batches_per_epoch},
       {"momentum", c.momentum},
       {"lr_base", c.lr_base},
       {"lr_max", c.lr_max},
       {"lr_halfcycle_steps", c.lr_halfcycle_steps},
       {"max_epochs", c.max_epochs},
       {"early_stop_patience", c.early_stop_patience},
       {"early_stop_min_delta_m", c.early_stop_min_delta_m},
       {"seed", c.seed},
       {"scenario", c.scenario},
       {"label_fraction", c.label_fraction}};
}

template <typename V>
void get_if(const nlohmann::json& j, const char* key, V& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  get_if(j, "window_cells", c.window_cells);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "batches_per_epoch", c.batches_per_epoch);
  get_if(j, "momentum", c.momentum);
  get_if(j, "lr_base", c.lr_base);
  get_if(j, "lr_max", c.lr_max);
  get_if(j, "lr_halfcycle_steps", c.lr_halfcycle_steps);
  get_if(j, "max_epochs", c.max_epochs);
  get_if(j, "early_stop_patience", c.early_stop_patience);
  get_if(j, "early_stop_min_delta_m", c.early_stop_min_delta_m);
  get_if(j, "seed", c.seed);
  get_if(j, "scenario", c.scenario);
  get_if(j, "label_fraction", c.label_fraction);
}

inline void to_json(nlohmann::json& j, const PredictOptions& o) {
  j = {{"tile_cells", o.tile_cells}, {"overlap_cells", o.overlap_cells}};
}

inline void from_json(const nlohmann::json& j, PredictOptions& o) {
  o = PredictOptions{};
  get_if(j, "tile_cells", o.tile_cells);
  get_if(j, "overlap_cells", o.overlap_cells);
}

// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
inline std::string json_digest(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

}  // namespace canopy

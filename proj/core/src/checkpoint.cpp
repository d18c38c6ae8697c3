#include "canopy/checkpoint.hpp"

#include <fstream>

#include "canopy/binary_io.hpp"
#include "canopy/error.hpp"
#include "json_convert.hpp"

namespace canopy::nn {

using nlohmann::json;

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& manifest_path) {
  auto p = manifest_path;
  require(p.extension() != ".bin", ErrorCode::InvalidArgument, "checkpoint manifest must not end in .bin");
  p.replace_extension(".bin");
  return p;
}

namespace {

json describe(const std::vector<ParamSpec>& specs) {
  json arr = json::array();
  for (const auto& s : specs) arr.push_back({{"name", s.name}, {"shape", s.shape}});
  return arr;
}

void check_layout(const ParamSet<float>& set, const std::vector<ParamSpec>& specs, const char* what) {
  require(set.size() == specs.size(), ErrorCode::ShapeError, std::string(what) + " count does not match config");
  for (std::size_t i = 0; i < specs.size(); ++i)
    require(set[i].size() == specs[i].count(), ErrorCode::ShapeError,
            std::string(what) + " '" + specs[i].name + "' has wrong size");
}

}  // namespace

void save_model(const ModelState& state, const std::filesystem::path& path) {
  const auto params = enumerate_params(state.config);
  const auto buffers = enumerate_buffers(state.config);
  check_layout(state.params, params, "parameter");
  check_layout(state.buffers, buffers, "buffer");
  check_layout(state.momentum, params, "momentum");

  const json manifest = {
      {"format_version", kCheckpointFormatVersion},
      {"config", state.config},
      {"params", describe(params)},
      {"buffers", describe(buffers)},
      {"param_count", param_count(state.config)},
      {"blob", checkpoint_blob_path(path).filename().string()},
  };
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path);
    require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
    out << manifest.dump(2) << '\n';
    require(bool(out), ErrorCode::IoError, "write failed for " + path.string());
  }
  std::ofstream blob(checkpoint_blob_path(path), std::ios::binary);
  require(bool(blob), ErrorCode::IoError, "cannot write " + checkpoint_blob_path(path).string());
  for (const auto* set : {&state.params, &state.buffers, &state.momentum})
    for (const auto& t : *set) detail::write_f32_le(blob, t);
  require(bool(blob), ErrorCode::IoError, "write failed for " + checkpoint_blob_path(path).string());
}

ModelState load_model(const std::filesystem::path& path, const std::optional<UNetConfig>& expected) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::IoError, "cannot open checkpoint " + path.string());
  json manifest;
  ModelState state;
  std::int64_t stored_count = 0;
  std::vector<std::string> names;
  try {
    in >> manifest;
    const int version = manifest.at("format_version").get<int>();
    require(version == kCheckpointFormatVersion, ErrorCode::CorruptCheckpoint,
            "unsupported checkpoint format_version " + std::to_string(version));
    state.config = manifest.at("config").get<UNetConfig>();
    stored_count = manifest.at("param_count").get<std::int64_t>();
    for (const auto& p : manifest.at("params")) names.push_back(p.at("name").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorCode::CorruptCheckpoint, path.string() + ": " + e.what());
  }
  state.config.validate();
  if (expected && !(*expected == state.config))
    fail(ErrorCode::CheckpointMismatch, "checkpoint " + path.string() + " was saved for a different model config");

  const auto params = enumerate_params(state.config);
  const auto buffers = enumerate_buffers(state.config);
  require(stored_count == param_count(state.config), ErrorCode::CorruptCheckpoint,
          "manifest param_count " + std::to_string(stored_count) + " disagrees with config (" +
              std::to_string(param_count(state.config)) + ")");
  require(names.size() == params.size(), ErrorCode::CorruptCheckpoint, "manifest parameter list is inconsistent");
  for (std::size_t i = 0; i < names.size(); ++i)
    require(names[i] == params[i].name, ErrorCode::CorruptCheckpoint, "unexpected parameter '" + names[i] + "'");

  std::vector<float> blob;
  try {
    blob = detail::read_f32_le_file(checkpoint_blob_path(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    fail(ErrorCode::CorruptCheckpoint, e.what());
  }
  std::size_t buffer_total = 0;
  for (const auto& b : buffers) buffer_total += b.count();
  const auto expected_size = 2 * static_cast<std::size_t>(stored_count) + buffer_total;
  require(blob.size() == expected_size, ErrorCode::CorruptCheckpoint,
          "checkpoint blob has " + std::to_string(blob.size()) + " values, expected " + std::to_string(expected_size));

  std::size_t pos = 0;
  auto take = [&](const std::vector<ParamSpec>& specs, ParamSet<float>& out) {
    for (const auto& s : specs) {
      out.emplace_back(blob.begin() + static_cast<std::ptrdiff_t>(pos),
                       blob.begin() + static_cast<std::ptrdiff_t>(pos + s.count()));
      pos += s.count();
    }
  };
  take(params, state.params);
  take(buffers, state.buffers);
  take(params, state.momentum);
  return state;
}

}  // namespace canopy::nn

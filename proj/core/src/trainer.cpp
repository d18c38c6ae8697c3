#include "canopy/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

#include "canopy/error.hpp"
#include "canopy/text_io.hpp"
#include "json_convert.hpp"

namespace canopy {

void TrainConfig::validate(const nn::UNetConfig& model) const {
  model.validate();
  const int m = model.size_multiple();
  require(window_cells >= m && window_cells % m == 0, ErrorCode::InvalidConfig,
          "window_cells must be a positive multiple of " + std::to_string(m));
  require(batch_size >= 1, ErrorCode::InvalidConfig, "batch_size must be >= 1");
  require(batches_per_epoch >= 1, ErrorCode::InvalidConfig, "batches_per_epoch must be >= 1");
  require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidConfig, "momentum must be in [0, 1)");
  require(lr_base >= 0.0 && lr_base < lr_max, ErrorCode::InvalidConfig, "need 0 <= lr_base < lr_max");
  require(lr_halfcycle_steps >= 1, ErrorCode::InvalidConfig, "lr_halfcycle_steps must be >= 1");
  require(max_epochs >= 0, ErrorCode::InvalidConfig, "max_epochs must be >= 0");
  require(early_stop_patience >= 1, ErrorCode::InvalidConfig, "early_stop_patience must be >= 1");
  require(early_stop_min_delta_m >= 0.0, ErrorCode::InvalidConfig, "early_stop_min_delta_m must be >= 0");
  require(scenario >= 1 && scenario <= 7, ErrorCode::InvalidConfig, "scenario must be in 1..7");
  require(label_fraction > 0.0 && label_fraction <= 1.0, ErrorCode::InvalidConfig,
          "label_fraction must be in (0, 1]");
}

std::string config_hash(const TrainConfig& train, const nn::UNetConfig& model) {
  return json_digest(nlohmann::json{{"train", train}, {"model", model}});
}

double triangular2_lr(std::int64_t step, double base, double max, std::int64_t half_cycle) {
  require(step >= 0, ErrorCode::InvalidArgument, "step must be >= 0");
  require(half_cycle >= 1, ErrorCode::InvalidArgument, "half cycle must be >= 1");
  const auto cycle = 1 + step / (2 * half_cycle);
  const double x = std::abs(static_cast<double>(step) / static_cast<double>(half_cycle) - 2.0 * cycle + 1.0);
  return base + (max - base) * std::max(0.0, 1.0 - x) / std::ldexp(1.0, static_cast<int>(cycle - 1));
}

template <typename T>
MaskedLoss<T> masked_mae(const nn::Tensor4<T>& pred, std::span<const SparseLabelRaster> labels) {
  const auto& s = pred.shape();
  require(s.c == 1, ErrorCode::ShapeError, "masked_mae expects single-channel predictions");
  require(static_cast<std::size_t>(s.n) == labels.size(), ErrorCode::ShapeError,
          "one label raster per batch item required");
  MaskedLoss<T> out;
  out.grad = nn::Tensor4<T>(s);
  for (int i = 0; i < s.n; ++i) {
    const auto& ls = labels[static_cast<std::size_t>(i)].spec();
    require(ls.height == s.h && ls.width == s.w, ErrorCode::ShapeError,
            "label window " + std::to_string(ls.height) + "x" + std::to_string(ls.width) +
                " does not match prediction " + std::to_string(s.h) + "x" + std::to_string(s.w));
    out.labeled += labels[static_cast<std::size_t>(i)].size();
  }
  if (out.labeled == 0) fail(ErrorCode::SkipBatch, "batch has no labeled pixels");
  const T inv = T(1) / static_cast<T>(out.labeled);
  double sum = 0.0;
  for (int i = 0; i < s.n; ++i) {
    for (const auto& e : labels[static_cast<std::size_t>(i)].entries()) {
      const T d = pred.at(i, 0, e.row, e.col) - static_cast<T>(e.height_m);
      sum += std::abs(static_cast<double>(d));
      out.grad.at(i, 0, e.row, e.col) = d > 0 ? inv : (d < 0 ? -inv : T(0));
    }
  }
  out.loss = sum / static_cast<double>(out.labeled);
  return out;
}

template MaskedLoss<float> masked_mae(const nn::Tensor4<float>&, std::span<const SparseLabelRaster>);
template MaskedLoss<double> masked_mae(const nn::Tensor4<double>&, std::span<const SparseLabelRaster>);

void sgd_momentum_step(nn::ModelState& state, const nn::ParamSet<float>& grads, double lr, double momentum) {
  require(grads.size() == state.params.size(), ErrorCode::ShapeError, "gradient count does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    require(grads[i].size() == state.params[i].size(), ErrorCode::ShapeError, "gradient shape mismatch");
    for (float g : grads[i])
      if (!std::isfinite(g)) fail(ErrorCode::NonFiniteGradient, "non-finite gradient; step aborted");
  }
  if (state.momentum.size() != state.params.size()) {
    state.momentum.clear();
    for (const auto& p : state.params) state.momentum.emplace_back(p.size(), 0.0f);
  }
  const auto mu = static_cast<float>(momentum);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& p = state.params[i];
    auto& v = state.momentum[i];
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mu * v[k] + g[k];
      p[k] -= rate * v[k];
    }
  }
}

namespace {

struct Range {
  int lo = 0;
  int hi = 0;
};

// Window start positions along one axis: inside the tile when it fits,
// otherwise overlapping the tile while staying inside the raster.
Range start_range(int tile_start, int tile_len, int window, int raster_len) {
  if (tile_len >= window) return {tile_start, tile_start + tile_len - window};
  return {std::max(0, tile_start + tile_len - window), std::min(tile_start, raster_len - window)};
}

int snap(int v, Range r, int stride) {
  v -= v % stride;
  if (v < r.lo) v += stride;
  return std::clamp(v, r.lo, r.hi);
}

}  // namespace

WindowSample sample_window(std::span<const TrainTile> tiles, const RasterStack& input,
                           const SparseLabelRaster& labels, int window_cells, int label_stride,
                           std::mt19937_64& rng) {
  require(label_stride >= 1 && window_cells % label_stride == 0, ErrorCode::InvalidArgument,
          "window must be a multiple of the label stride");
  const auto& spec = input.spec();
  require(window_cells <= spec.width && window_cells <= spec.height, ErrorCode::WindowOutOfBounds,
          "window larger than the input raster");
  require(labels.spec().width * label_stride == spec.width && labels.spec().height * label_stride == spec.height,
          ErrorCode::GridMismatch, "label grid does not match input grid and stride");

  std::vector<double> weights;
  bool any = false;
  for (const auto& t : tiles) {
    weights.push_back(static_cast<double>(std::max<std::int64_t>(0, t.footprint_count)));
    any |= t.footprint_count > 0;
  }
  if (!any) fail(ErrorCode::NoLabels, "no training tile has a footprint");
  std::discrete_distribution<int> pick_tile(weights.begin(), weights.end());
  const int tile_id = pick_tile(rng);
  const auto& t = tiles[static_cast<std::size_t>(tile_id)].cells;

  const Range rows = start_range(t.row, t.rows, window_cells, spec.height);
  const Range cols = start_range(t.col, t.cols, window_cells, spec.width);
  const int lw = window_cells / label_stride;
  auto label_rect = [&](int r, int c) { return CellRect{r / label_stride, c / label_stride, lw, lw}; };

  WindowSample out;
  out.tile = tile_id;
  for (int attempt = 0; attempt < kWindowRetries; ++attempt) {
    std::uniform_int_distribution<int> dr(rows.lo, rows.hi), dc(cols.lo, cols.hi);
    const int r = snap(dr(rng), rows, label_stride);
    const int c = snap(dc(rng), cols, label_stride);
    if (labels.count_in(label_rect(r, c)) > 0) {
      out.origin = {r, c};
      break;
    }
    if (attempt + 1 == kWindowRetries) out.fallback = true;
  }
  if (out.fallback) {
    const CellRect tl{t.row / label_stride, t.col / label_stride, (t.rows + label_stride - 1) / label_stride,
                      (t.cols + label_stride - 1) / label_stride};
    std::vector<const LabelEntry*> inside;
    for (const auto& e : labels.entries())
      if (tl.contains({e.row, e.col})) inside.push_back(&e);
    if (inside.empty()) fail(ErrorCode::NoLabels, "selected tile holds no labels");
    std::uniform_int_distribution<std::size_t> de(0, inside.size() - 1);
    const auto* e = inside[de(rng)];
    const int cr = e->row * label_stride + label_stride / 2 - window_cells / 2;
    const int cc = e->col * label_stride + label_stride / 2 - window_cells / 2;
    out.origin = {snap(std::clamp(cr, rows.lo, rows.hi), rows, label_stride),
                  snap(std::clamp(cc, cols.lo, cols.hi), cols, label_stride)};
  }
  out.input = window(input, out.origin, window_cells);
  out.labels = labels.window(label_rect(out.origin.row, out.origin.col));
  return out;
}

std::optional<double> label_mae(const RasterStack& prediction, const SparseLabelRaster& labels) {
  require(prediction.spec() == labels.spec(), ErrorCode::GridMismatch, "prediction and labels use different grids");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : labels.entries()) {
    const float p = prediction.at(0, e.row, e.col);
    if (prediction.is_nodata(p)) continue;
    sum += std::abs(static_cast<double>(p) - e.height_m);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

TrainResult train(const nn::ModelState& initial, const TrainData& data, const TrainConfig& config,
                  const PredictOptions& predict, const EpochCallback& on_epoch) {
  const auto& mc = initial.config;
  config.validate(mc);
  const auto started = std::chrono::steady_clock::now();
  const int stride = mc.output_stride();

  TrainResult result;
  result.last = initial;
  result.log.seed = config.seed;
  result.log.config_hash = config_hash(config, mc);

  nn::UNet<float> net(mc);
  std::mt19937_64 rng(config.seed);
  const int c = data.input.band_count();
  const int w = config.window_cells;
  std::int64_t step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double reference = best_val;
  int stale = 0;
  auto& state = result.last;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      nn::Tensor4<float> x({config.batch_size, c, w, w});
      std::vector<SparseLabelRaster> windows;
      for (int i = 0; i < config.batch_size; ++i) {
        auto s = sample_window(data.train_tiles, data.input, data.train_labels, w, stride, rng);
        std::copy(s.input.values().begin(), s.input.values().end(), x.item(i).begin());
        windows.push_back(std::move(s.labels));
      }
      const auto pred = net.forward_train(state.params, state.buffers, x);
      const auto loss = masked_mae<float>(pred, windows);
      const auto grads = net.backward(state.params, loss.grad);
      const double lr = triangular2_lr(step, config);
      try {
        sgd_momentum_step(state, grads, lr, config.momentum);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteGradient) throw;
        ++result.log.skipped_steps;
      }
      result.log.steps.push_back({step, lr, loss.loss});
      ++step;
    }

    EpochRecord rec{epoch, std::nullopt};
    if (data.val_labels.size() > 0) {
      const auto map = predict_map(state, data.input, predict, data.val_regions);
      rec.val_mae = label_mae(map, data.val_labels);
    }
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (!rec.val_mae) continue;
    if (*rec.val_mae < best_val) {
      best_val = *rec.val_mae;
      result.best = state;
      result.log.best_epoch = epoch;
    }
    if (*rec.val_mae < reference - config.early_stop_min_delta_m) {
      reference = *rec.val_mae;
      stale = 0;
    } else if (++stale >= config.early_stop_patience) {
      result.log.stopped_early = true;
      break;
    }
  }
  if (result.log.best_epoch < 0) result.best = state;
  result.log.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void write_train_log(const TrainLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "train_steps.csv");
    require(bool(out), ErrorCode::IoError, "cannot write " + (dir / "train_steps.csv").string());
    out << "step,lr,train_loss\n";
    for (const auto& s : log.steps)
      out << s.step << ',' << detail::format_double(s.lr) << ',' << detail::format_double(s.train_loss) << '\n';
    require(bool(out), ErrorCode::IoError, "write failed for train_steps.csv");
  }
  std::ofstream out(dir / "val_epochs.csv");
  require(bool(out), ErrorCode::IoError, "cannot write " + (dir / "val_epochs.csv").string());
  out << "epoch,val_mae\n";
  for (const auto& e : log.epochs) out << e.epoch << ',' << detail::format_optional(e.val_mae) << '\n';
  require(bool(out), ErrorCode::IoError, "write failed for val_epochs.csv");
}

TrainLog read_train_log(const std::filesystem::path& dir) {
  TrainLog log;
  auto lines = [](const std::filesystem::path& p, const std::string& header) {
    std::ifstream in(p);
    require(bool(in), ErrorCode::IoError, "cannot open " + p.string());
    std::string line;
    std::getline(in, line);
    require(detail::trim(line) == header, ErrorCode::ParseError, p.string() + ": unexpected header");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      if (detail::trim(line).empty()) continue;
      std::vector<std::string> fields;
      for (auto f : detail::split_csv_line(detail::trim(line))) fields.emplace_back(f);
      rows.push_back(std::move(fields));
    }
    return rows;
  };
  for (const auto& f : lines(dir / "train_steps.csv", "step,lr,train_loss")) {
    require(f.size() == 3, ErrorCode::ParseError, "train_steps.csv: expected 3 fields");
    log.steps.push_back({detail::parse_int<std::int64_t>(f[0], "step"), detail::parse_double(f[1], "lr"),
                         detail::parse_double(f[2], "train_loss")});
  }
  for (const auto& f : lines(dir / "val_epochs.csv", "epoch,val_mae")) {
    require(f.size() == 2, ErrorCode::ParseError, "val_epochs.csv: expected 2 fields");
    log.epochs.push_back({detail::parse_int<int>(f[0], "epoch"), detail::parse_optional_double(f[1], "val_mae")});
  }
  return log;
}

}  // namespace canopy

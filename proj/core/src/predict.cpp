#include <algorithm>

#include "canopy/error.hpp"
#include "canopy/parallel.hpp"
#include "canopy/trainer.hpp"

namespace canopy {

namespace {

// Mirror index into [0, n) without repeating the edge sample.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct TileJob {
  int row = 0;  // tile origin in input cells (may be negative)
  int col = 0;
  CellRect interior;  // input cells written by this tile
};

bool intersects(const CellRect& a, const CellRect& b) {
  return a.row < b.row + b.rows && b.row < a.row + a.rows && a.col < b.col + b.cols && b.col < a.col + a.cols;
}

}  // namespace

int resolve_overlap(const nn::UNetConfig& config, const PredictOptions& options) {
  config.validate();
  int ov = options.overlap_cells < 0 ? nn::receptive_radius(config) : options.overlap_cells;
  const int minimum = 2 * config.depth + 2;
  require(ov >= minimum, ErrorCode::InvalidArgument,
          "overlap_cells must be >= " + std::to_string(minimum) + " (got " + std::to_string(ov) + ")");
  const int s = config.output_stride();
  return (ov + s - 1) / s * s;
}

RasterStack predict_map(const nn::ModelState& model, const RasterStack& input, const PredictOptions& options,
                        std::span<const CellRect> roi) {
  const auto& cfg = model.config;
  const int m = cfg.size_multiple();
  const int s = cfg.output_stride();
  require(options.tile_cells >= m && options.tile_cells % m == 0, ErrorCode::InvalidArgument,
          "tile_cells must be a positive multiple of " + std::to_string(m));
  require(input.band_count() == cfg.in_channels, ErrorCode::ShapeError,
          "input has " + std::to_string(input.band_count()) + " bands, model expects " +
              std::to_string(cfg.in_channels));
  const auto& spec = input.spec();
  const int H = spec.height;
  const int W = spec.width;
  require(H % s == 0 && W % s == 0, ErrorCode::ShapeError, "raster size must be a multiple of the output stride");
  const int tile = options.tile_cells;
  const int ov = resolve_overlap(cfg, options);

  GridSpec out_spec = spec;
  out_spec.cell_size_m = spec.cell_size_m * s;
  out_spec.width = W / s;
  out_spec.height = H / s;
  RasterStack out(out_spec, {"height_m"}, input.nodata());
  std::fill(out.values().begin(), out.values().end(), input.nodata());

  // Tile geometry: shape of the network input plus the jobs covering the raster.
  int th = tile, tw = tile, ctx = ov;
  std::vector<TileJob> jobs;
  if (H <= tile && W <= tile) {
    th = (H + m - 1) / m * m;
    tw = (W + m - 1) / m * m;
    ctx = 0;
    jobs.push_back({0, 0, {0, 0, H, W}});
  } else {
    const int step = (tile - 2 * ov) / m * m;
    require(step >= m, ErrorCode::InvalidArgument,
            "tile_cells " + std::to_string(tile) + " too small for overlap " + std::to_string(ov));
    for (int r = 0; r < H; r += step) {
      for (int c = 0; c < W; c += step) {
        TileJob job{r - ov, c - ov, {r, c, std::min(step, H - r), std::min(step, W - c)}};
        if (!roi.empty() && std::none_of(roi.begin(), roi.end(),
                                         [&](const CellRect& q) { return intersects(q, job.interior); }))
          continue;
        jobs.push_back(job);
      }
    }
  }

  const nn::UNet<float> net(cfg);
  const int bands = input.band_count();
  const auto batch = static_cast<std::size_t>(std::max(1, num_threads()));
  for (std::size_t first = 0; first < jobs.size(); first += batch) {
    const auto count = std::min(batch, jobs.size() - first);
    nn::Tensor4<float> x({static_cast<int>(count), bands, th, tw});
    parallel_for(count, [&](std::size_t k) {
      const auto& job = jobs[first + k];
      for (int b = 0; b < bands; ++b) {
        const auto src = input.band(b);
        for (int r = 0; r < th; ++r) {
          const int sr = reflect(job.row + r, H);
          for (int c = 0; c < tw; ++c)
            x.at(static_cast<int>(k), b, r, c) =
                src[static_cast<std::size_t>(sr) * W + static_cast<std::size_t>(reflect(job.col + c, W))];
        }
      }
    });
    const auto y = net.forward(model.params, model.buffers, x);
    for (std::size_t k = 0; k < count; ++k) {
      const auto& in = jobs[first + k].interior;
      for (int r = 0; r < in.rows / s; ++r)
        for (int c = 0; c < in.cols / s; ++c)
          out.at(0, in.row / s + r, in.col / s + c) = y.at(static_cast<int>(k), 0, ctx / s + r, ctx / s + c);
    }
  }
  return out;
}

}  // namespace canopy

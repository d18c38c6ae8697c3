#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "canopy/error.hpp"
#include "canopy/parallel.hpp"
#include "canopy/stereochm.hpp"

namespace canopy {

namespace {

// Nearest-constraint fill used as the relaxation starting point.
void seed_from_constraints(std::vector<double>& z, const std::vector<char>& fixed, int w, int h) {
  std::vector<char> seen(fixed);
  std::deque<int> queue;
  for (int i = 0; i < w * h; ++i)
    if (fixed[static_cast<std::size_t>(i)]) queue.push_back(i);
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    const int r = i / w, c = i % w;
    const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
    for (const auto& n : nb) {
      if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
      const int j = n[0] * w + n[1];
      if (seen[static_cast<std::size_t>(j)]) continue;
      seen[static_cast<std::size_t>(j)] = 1;
      z[static_cast<std::size_t>(j)] = z[static_cast<std::size_t>(i)];
      queue.push_back(j);
    }
  }
}

}  // namespace

DtmResult laplace_dtm(std::span<const PointXYZ> ground, const GridSpec& spec, const LaplaceOptions& options) {
  spec.validate();
  require(options.tolerance_m > 0.0 && options.max_sweeps >= 1, ErrorCode::InvalidArgument,
          "Laplace tolerance and sweep budget must be positive");
  const int w = spec.width, h = spec.height;
  const auto cells = static_cast<std::size_t>(spec.cell_count());
  std::vector<double> sum(cells, 0.0);
  std::vector<int> count(cells, 0);
  for (const auto& p : ground) {
    const auto cell = spec.cell_of({p.x_m, p.y_m});
    if (!cell) continue;
    const auto i = static_cast<std::size_t>(cell->row) * w + cell->col;
    sum[i] += p.z_m;
    ++count[i];
  }
  std::vector<char> fixed(cells, 0);
  std::vector<double> z(cells, 0.0);
  std::size_t n_fixed = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (count[i] == 0) continue;
    fixed[i] = 1;
    z[i] = sum[i] / count[i];
    ++n_fixed;
  }
  if (n_fixed == 0) fail(ErrorCode::EmptyConstraints, "no ground point falls inside the DTM grid");
  seed_from_constraints(z, fixed, w, h);

  auto neighbour_mean = [&](int r, int c) {
    double s = 0.0;
    int n = 0;
    if (r > 0) s += z[static_cast<std::size_t>(r - 1) * w + c], ++n;
    if (r + 1 < h) s += z[static_cast<std::size_t>(r + 1) * w + c], ++n;
    if (c > 0) s += z[static_cast<std::size_t>(r) * w + c - 1], ++n;
    if (c + 1 < w) s += z[static_cast<std::size_t>(r) * w + c + 1], ++n;
    return n > 0 ? s / n : z[static_cast<std::size_t>(r) * w + c];
  };

  const double omega = 2.0 / (1.0 + std::sin(std::numbers::pi / std::max({w, h, 2})));
  std::vector<double> row_residual(static_cast<std::size_t>(h), 0.0);
  DtmResult result;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    for (int color = 0; color < 2; ++color) {
      parallel_for(static_cast<std::size_t>(h), [&](std::size_t rr) {
        const int r = static_cast<int>(rr);
        for (int c = (r + color) % 2; c < w; c += 2) {
          const auto i = static_cast<std::size_t>(r) * w + c;
          if (!fixed[i]) z[i] += omega * (neighbour_mean(r, c) - z[i]);
        }
      });
    }
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t rr) {
      const int r = static_cast<int>(rr);
      double m = 0.0;
      for (int c = 0; c < w; ++c) {
        const auto i = static_cast<std::size_t>(r) * w + c;
        if (!fixed[i]) m = std::max(m, std::abs(neighbour_mean(r, c) - z[i]));
      }
      row_residual[rr] = m;
    });
    result.sweeps = sweep + 1;
    result.residual_m = *std::max_element(row_residual.begin(), row_residual.end());
    if (result.residual_m < options.tolerance_m) {
      result.converged = true;
      break;
    }
  }
  result.dtm = RasterStack(spec, {"dtm_m"});
  auto band = result.dtm.band(0);
  for (std::size_t i = 0; i < cells; ++i) band[i] = static_cast<float>(z[i]);
  return result;
}

}  // namespace canopy

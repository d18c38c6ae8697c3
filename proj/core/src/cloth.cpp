#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "canopy/error.hpp"
#include "canopy/parallel.hpp"
#include "canopy/stereochm.hpp"

namespace canopy {

void ClothParams::validate() const {
  require(cloth_cell_m > 0.0 && rigidness >= 1 && gravity_step_m > 0.0 && max_steps >= 1 && epsilon_m > 0.0 &&
              classification_threshold_m > 0.0 && initial_clearance_m > 0.0,
          ErrorCode::InvalidConfig, "cloth parameters must all be positive");
}

namespace {

constexpr double kNone = -std::numeric_limits<double>::infinity();

// Copies each empty node's value from its nearest filled node (breadth-first).
void fill_empty(std::vector<double>& v, int w, int h) {
  std::deque<int> queue;
  for (int i = 0; i < w * h; ++i)
    if (v[static_cast<std::size_t>(i)] != kNone) queue.push_back(i);
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    const int r = i / w, c = i % w;
    const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
    for (const auto& n : nb) {
      if (n[0] < 0 || n[0] >= h || n[1] < 0 || n[1] >= w) continue;
      const auto j = static_cast<std::size_t>(n[0] * w + n[1]);
      if (v[j] != kNone) continue;
      v[j] = v[static_cast<std::size_t>(i)];
      queue.push_back(static_cast<int>(j));
    }
  }
}

}  // namespace

ClothResult cloth_ground_filter(std::span<const PointXYZ> points, const ClothParams& params) {
  params.validate();
  if (points.empty()) fail(ErrorCode::EmptyCloud, "point cloud is empty");
  double min_x = HUGE_VAL, max_x = -HUGE_VAL, min_y = HUGE_VAL, max_y = -HUGE_VAL;
  for (const auto& p : points) {
    require(std::isfinite(p.x_m) && std::isfinite(p.y_m) && std::isfinite(p.z_m), ErrorCode::InvalidArgument,
            "point coordinates must be finite");
    min_x = std::min(min_x, p.x_m);
    max_x = std::max(max_x, p.x_m);
    min_y = std::min(min_y, p.y_m);
    max_y = std::max(max_y, p.y_m);
  }
  const double cell = params.cloth_cell_m;
  // Node (r, c) sits at (min_x + c * cell, max_y - r * cell).
  GridSpec grid;
  grid.cell_size_m = cell;
  grid.origin_x_m = min_x - 0.5 * cell;
  grid.origin_y_m = max_y + 0.5 * cell;
  grid.width = static_cast<int>(std::floor((max_x - min_x) / cell + 0.5)) + 1;
  grid.height = static_cast<int>(std::floor((max_y - min_y) / cell + 0.5)) + 1;
  grid.validate();
  const int w = grid.width, h = grid.height;
  const auto nodes = static_cast<std::size_t>(grid.cell_count());

  auto node_of = [&](const PointXYZ& p) {
    const int c = std::clamp(static_cast<int>(std::floor((p.x_m - min_x) / cell + 0.5)), 0, w - 1);
    const int r = std::clamp(static_cast<int>(std::floor((max_y - p.y_m) / cell + 0.5)), 0, h - 1);
    return static_cast<std::size_t>(r) * w + c;
  };

  // Collision surface in inverted space: the highest inverted point per node,
  // i.e. the lowest original point.
  std::vector<double> surface(nodes, kNone);
  for (const auto& p : points) {
    auto& s = surface[node_of(p)];
    s = std::max(s, -p.z_m);
  }
  fill_empty(surface, w, h);

  const double start = *std::max_element(surface.begin(), surface.end()) + params.initial_clearance_m;
  std::vector<double> z(nodes, start), next(nodes);
  std::vector<char> pinned(nodes, 0);
  std::vector<double> row_move(static_cast<std::size_t>(h));

  ClothResult result;
  for (int step = 0; step < params.max_steps; ++step) {
    const auto before = z;
    for (std::size_t i = 0; i < nodes; ++i)
      if (!pinned[i]) z[i] -= params.gravity_step_m;
    for (int pass = 0; pass < params.rigidness; ++pass) {
      parallel_for(static_cast<std::size_t>(h), [&](std::size_t rr) {
        const int r = static_cast<int>(rr);
        for (int c = 0; c < w; ++c) {
          const auto i = static_cast<std::size_t>(r) * w + c;
          if (pinned[i]) {
            next[i] = z[i];
            continue;
          }
          double s = 0.0;
          int n = 0;
          if (r > 0) s += z[i - static_cast<std::size_t>(w)], ++n;
          if (r + 1 < h) s += z[i + static_cast<std::size_t>(w)], ++n;
          if (c > 0) s += z[i - 1], ++n;
          if (c + 1 < w) s += z[i + 1], ++n;
          next[i] = n > 0 ? z[i] + 0.5 * (s / n - z[i]) : z[i];
        }
      });
      z.swap(next);
    }
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t rr) {
      double m = 0.0;
      for (int c = 0; c < w; ++c) {
        const auto i = rr * static_cast<std::size_t>(w) + static_cast<std::size_t>(c);
        if (!pinned[i] && z[i] <= surface[i]) {
          z[i] = surface[i];
          pinned[i] = 1;
        }
        m = std::max(m, std::abs(z[i] - before[i]));
      }
      row_move[rr] = m;
    });
    result.steps = step + 1;
    if (*std::max_element(row_move.begin(), row_move.end()) < params.epsilon_m) {
      result.converged = true;
      break;
    }
  }

  auto cloth_at = [&](double x, double y) {
    const double fx = std::clamp((x - min_x) / cell, 0.0, static_cast<double>(w - 1));
    const double fy = std::clamp((max_y - y) / cell, 0.0, static_cast<double>(h - 1));
    const int c0 = std::min(static_cast<int>(fx), std::max(0, w - 2));
    const int r0 = std::min(static_cast<int>(fy), std::max(0, h - 2));
    const int c1 = std::min(c0 + 1, w - 1), r1 = std::min(r0 + 1, h - 1);
    const double tx = fx - c0, ty = fy - r0;
    auto at = [&](int r, int c) { return z[static_cast<std::size_t>(r) * w + c]; };
    return (1 - ty) * ((1 - tx) * at(r0, c0) + tx * at(r0, c1)) + ty * ((1 - tx) * at(r1, c0) + tx * at(r1, c1));
  };

  result.labels.reserve(points.size());
  for (const auto& p : points) {
    const double d = std::abs(-p.z_m - cloth_at(p.x_m, p.y_m));
    result.labels.push_back(d <= params.classification_threshold_m ? PointClass::Ground : PointClass::NonGround);
  }
  result.cloth_grid = grid;
  result.cloth_z.resize(nodes);
  for (std::size_t i = 0; i < nodes; ++i) result.cloth_z[i] = -z[i];
  return result;
}

}  // namespace canopy

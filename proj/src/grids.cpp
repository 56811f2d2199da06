#include "gazecone/grids.hpp"

#include <algorithm>
#include <cmath>

#include "gazecone/errors.hpp"

namespace gazecone::grids {

std::size_t mirrored_grid(std::size_t g) {
  const auto s = kGridShift[g];
  for (std::size_t h = 0; h < kGridCount; ++h) {
    if (kGridShift[h].rows == s.rows && kGridShift[h].cols == -s.cols) return h;
  }
  return g;
}

std::size_t canvas_cell(double coord) {
  const double u = coord * static_cast<double>(kCanvasSide);
  if (!(u > 0.0)) return 0;
  return std::min(kCanvasSide - 1, static_cast<std::size_t>(u));
}

namespace {

// Grid cell covering canvas index `cell` under `shift`, or -1 when outside the grid.
int grid_cell(int cell, int shift) {
  const int local = cell - shift;
  if (local < 0 || local >= static_cast<int>(kCanvasSide)) return -1;
  return local / static_cast<int>(kCellSpan);
}

}  // namespace

std::size_t target_class(const geometry::Vec2& y, std::size_t g) {
  const int side = static_cast<int>(kGridSide);
  const auto clamp_cell = [&](int cell, int shift) {
    const int local = cell - shift;
    const int gc = local < 0 ? -1 : local / static_cast<int>(kCellSpan);
    return std::clamp(gc, 0, side - 1);
  };
  const int row = clamp_cell(static_cast<int>(canvas_cell(y.y())), kGridShift[g].rows);
  const int col = clamp_cell(static_cast<int>(canvas_cell(y.x())), kGridShift[g].cols);
  return static_cast<std::size_t>(row * side + col);
}

std::array<double, kGridCount * kClasses> grid_probabilities(std::span<const double> logits, bool mask_no_gaze) {
  if (logits.size() != kGridCount * kClasses) {
    throw DimensionError("shifted grids expect " + std::to_string(kGridCount * kClasses) + " logits, got " +
                         std::to_string(logits.size()));
  }
  std::array<double, kGridCount * kClasses> p{};
  const std::size_t used = mask_no_gaze ? kLocationClasses : kClasses;
  for (std::size_t g = 0; g < kGridCount; ++g) {
    const double* z = logits.data() + g * kClasses;
    const double m = *std::max_element(z, z + used);
    double s = 0.0;
    for (std::size_t c = 0; c < used; ++c) s += (p[g * kClasses + c] = std::exp(z[c] - m));
    for (std::size_t c = 0; c < used; ++c) p[g * kClasses + c] /= s;
  }
  return p;
}

Density combine(std::span<const double> logits, bool mask_no_gaze) {
  const auto p = grid_probabilities(logits, mask_no_gaze);
  Density out{geometry::SpatialMap(kCanvasSide), 0.0};
  const double block = static_cast<double>(kCellSpan * kCellSpan);
  for (std::size_t r = 0; r < kCanvasSide; ++r) {
    for (std::size_t c = 0; c < kCanvasSide; ++c) {
      double acc = 0.0;
      int cover = 0;
      for (std::size_t g = 0; g < kGridCount; ++g) {
        const int gr = grid_cell(static_cast<int>(r), kGridShift[g].rows);
        const int gc = grid_cell(static_cast<int>(c), kGridShift[g].cols);
        if (gr < 0 || gc < 0) continue;
        acc += p[g * kClasses + gr * kGridSide + gc] / block;
        ++cover;
      }
      out.canvas.at(r, c) = cover > 0 ? acc / cover : 0.0;
    }
  }
  for (std::size_t g = 0; g < kGridCount; ++g) out.no_gaze += p[g * kClasses + kNoGazeClass];
  out.no_gaze /= static_cast<double>(kGridCount);
  double total = 0.0;
  for (double v : out.canvas.values()) total += v;
  if (total > 0.0) {
    const double scale = (1.0 - out.no_gaze) / total;
    for (double& v : out.canvas.values()) v *= scale;
  }
  return out;
}

geometry::Vec2 mode(const geometry::SpatialMap& canvas) {
  const auto v = canvas.values();
  const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  const std::size_t i = best / canvas.side(), j = best % canvas.side();
  const double side = static_cast<double>(canvas.side());
  return {(2.0 * static_cast<double>(j) + 1.0) / (2.0 * side), (2.0 * static_cast<double>(i) + 1.0) / (2.0 * side)};
}

}  // namespace gazecone::grids

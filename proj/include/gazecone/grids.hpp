#pragma once

// Shifted classification grids. Five 5x5 grids, each with 25 location classes
// plus one "no gaze in view" class, are painted onto a 15x15 canvas; every grid
// cell covers a 3x3 block of canvas cells. Grid g is displaced by
// kGridShift[g] = (rows, cols) canvas cells.

#include <array>
#include <cstddef>
#include <optional>
#include <span>

#include "gazecone/geometry.hpp"

namespace gazecone::grids {

inline constexpr std::size_t kGridCount = 5;
inline constexpr std::size_t kGridSide = 5;
inline constexpr std::size_t kLocationClasses = kGridSide * kGridSide;
inline constexpr std::size_t kClasses = kLocationClasses + 1;
inline constexpr std::size_t kNoGazeClass = kLocationClasses;  // 0-based index 25
inline constexpr std::size_t kCanvasSide = 3 * kGridSide;
inline constexpr std::size_t kCellSpan = 3;

struct Shift {
  int rows, cols;
};
inline constexpr std::array<Shift, kGridCount> kGridShift{{{0, 0}, {-1, 0}, {+1, 0}, {0, -1}, {0, +1}}};

// Index of the grid that is the horizontal mirror image of grid g.
std::size_t mirrored_grid(std::size_t g);

// Canvas cell of an image coordinate in [0,1].
std::size_t canvas_cell(double coord);

// Location class (row-major 0..24) of point y = (x, y) in grid g, clamped into
// the grid when the shift pushes it out.
std::size_t target_class(const geometry::Vec2& y, std::size_t g);

struct Density {
  geometry::SpatialMap canvas;  // 15 x 15, nonnegative
  double no_gaze = 0.0;         // canvas sum + no_gaze == 1
};

// Per-grid softmax over the 26 classes (or the 25 location classes when
// mask_no_gaze), probability of each grid cell spread evenly over its 3x3
// canvas block, grids averaged per canvas cell over the grids that cover it,
// then renormalised so that the canvas carries 1 - mean(no-gaze probability).
// logits: kGridCount * kClasses values, grid-major.
Density combine(std::span<const double> logits, bool mask_no_gaze);

// Per-grid probabilities (grid-major, kClasses each). Masked no-gaze gets 0.
std::array<double, kGridCount * kClasses> grid_probabilities(std::span<const double> logits, bool mask_no_gaze);

// Centre of the argmax canvas cell in image coordinates; ties go to the first
// cell in row-major order.
geometry::Vec2 mode(const geometry::SpatialMap& canvas);

}  // namespace gazecone::grids

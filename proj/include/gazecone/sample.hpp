#pragma once

#include <optional>

#include "gazecone/geometry.hpp"
#include "gazecone/tensor.hpp"

namespace gazecone {

/// One training/evaluation record. Image coordinates are in [0,1]^2 with the
/// first component horizontal (column) and the second vertical (row).
struct Sample {
  Tensor source;  // [c, side, side], contains the person
  Tensor head;    // [c, crop, crop], cut around the head
  Tensor target;  // [c, side, side], where the gaze is predicted
  geometry::Vec2 eye = geometry::Vec2(0.5, 0.5);
  std::optional<geometry::Vec2> gaze;  // empty means NO_GAZE
  bool same_scene = true;
  // Diagnostics only; never fed to a model.
  double camera_angle = 0.0;  // radians, vertical-axis rotation of the target view
  geometry::Vec3 gaze_direction = geometry::Vec3::UnitZ();
};

inline double to_view(double image_coord) { return 2.0 * image_coord - 1.0; }
inline double to_image(double view_coord) { return 0.5 * (view_coord + 1.0); }

}  // namespace gazecone

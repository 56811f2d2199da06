#pragma once

// Synthetic two-view gaze scenes with exact labels.
//
// The world frame is the source camera frame: the source view is the
// orthographic projection onto the plane z = 0, looking along +z. The target
// camera orbits the vertical axis through c = (0, 0, view_depth) by `angle`;
// its view plane passes through c, so it is t + R [-1,1]^2 with R = R_y(angle)
// and t = c + jitter. The head lies on z = 0, in front of the target plane,
// and looks within ~37 degrees of the plane normal. All objects sit on the
// target view plane, so the gaze ray through an object's centre meets the
// plane at the centre's projection. Background channel 2 carries a horizontal
// shading ramp proportional to sin(angle), and channels 0/1 carry a per-world
// tint.

#include <cstdint>
#include <optional>
#include <vector>

#include "gazecone/geometry.hpp"
#include "gazecone/sample.hpp"

namespace gazecone::synth {

using geometry::Vec2;
using geometry::Vec3;

struct GenConfig {
  std::size_t image_side = 32;
  std::size_t head_crop = 8;
  std::size_t min_blobs = 2, max_blobs = 6;
  double blob_radius = 0.12;       // view units
  double head_radius_px = 3.5;     // radius of the rendered head, pixels
  double no_gaze_fraction = 0.10;
  bool extension = false;          // mix in different-scene pairs
  double different_scene_fraction = 0.5;
  double max_camera_angle_deg = 60.0;
  double view_depth = 2.0;
  double translation_jitter = 0.05;
  std::size_t train_count = 5000, test_count = 1000;

  void validate() const;
};

inline constexpr std::size_t kChannels = 3;

struct Blob {
  Vec3 position;
  int color = 0;
  bool operator==(const Blob&) const = default;
};

struct World {
  std::vector<Blob> blobs;
  Vec2 tint = Vec2::Zero();
  bool operator==(const World&) const = default;
};

struct Camera {
  double angle = 0.0;  // radians
  Vec3 translation = Vec3::Zero();

  // The pose as a vertical_rot_trans transform (raw parameters).
  geometry::AffineT transform() const;
  // Target-view coordinates (b1, b2, depth) of a world point.
  Vec3 to_view(const Vec3& p) const;
  bool operator==(const Camera&) const = default;
};

struct Scene {
  World world;
  Camera camera;                       // target pose for `world`
  Vec3 head = Vec3::Zero();            // on the source plane
  Vec3 gaze_direction = Vec3::UnitZ(); // unit
  std::optional<std::size_t> gazed;    // index into world.blobs, empty for NO_GAZE
  bool same_scene = true;
  // Target view content when same_scene is false.
  World other_world;
  Camera other_camera;

  bool operator==(const Scene&) const = default;
};

// Throws GenerationError when the constraints cannot be met in 5000 attempts for the drawn pose.
Scene gen_scene(std::uint64_t seed, const GenConfig& cfg);

// Exact gaze label: the head ray along the true direction intersected with the
// target plane, in target image coordinates. Empty for NO_GAZE scenes,
// different-scene pairs, rays parallel to or pointing away from the plane,
// and hits outside the frame.
std::optional<Vec2> project_gaze_oracle(const Scene& scene);

Sample render_views(const Scene& scene, const GenConfig& cfg);

// Renders the head pattern for `direction` into a [3, crop, crop] patch whose
// centre is the head centre (a pixel corner). Background is `fill`.
Tensor render_head_patch(const Vec3& direction, const GenConfig& cfg, double fill = 0.0);

// Samples for indices [first, first + count) of the stream rooted at `seed`.
std::vector<Sample> generate(std::uint64_t seed, const GenConfig& cfg, std::size_t count, std::size_t first = 0);

struct SplitData {
  std::vector<Sample> train, test;
};
// Train and test sets from disjoint index ranges of the same stream.
SplitData generate_split(std::uint64_t seed, const GenConfig& cfg);

}  // namespace gazecone::synth

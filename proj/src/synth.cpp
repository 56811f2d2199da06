#include "gazecone/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <numbers>

#include "gazecone/errors.hpp"
#include "gazecone/random.hpp"

namespace gazecone::synth {

using geometry::Mat3;

namespace {

constexpr std::array<std::array<double, 2>, 4> kPalette{{{1.0, 0.15}, {0.15, 1.0}, {1.0, 1.0}, {0.6, 0.6}}};
constexpr double kTintMax = 0.25;
constexpr double kRampAmplitude = 0.4;
constexpr double kBlobExtent = 0.8;  // blob centres within [-0.8, 0.8]^2 of the target view
constexpr double kHeadMargin = 0.15;  // head centre within [0.15, 0.85] of the source image
constexpr double kMinGazeDistance = 0.35;
constexpr double kBlobSeparation = 2.5;  // in blob radii
constexpr double kMinIncidenceCos = 0.8;  // gaze within ~37 degrees of the target plane normal
constexpr int kMaxAttempts = 5000;

Mat3 rotation_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Camera random_camera(Rng& rng, const GenConfig& cfg) {
  const double max_angle = cfg.max_camera_angle_deg * std::numbers::pi / 180.0;
  Camera cam;
  cam.angle = rng.uniform(-max_angle, max_angle);
  const Vec3 jitter(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  cam.translation = Vec3(0.0, 0.0, cfg.view_depth) + cfg.translation_jitter * jitter;
  return cam;
}

// Blobs on the camera's view plane, pairwise separated. Returns false on failure.
bool place_blobs(Rng& rng, const GenConfig& cfg, const Camera& cam, std::size_t count, World& world) {
  world.blobs.clear();
  world.tint = Vec2(rng.uniform(0.0, kTintMax), rng.uniform(0.0, kTintMax));
  std::vector<Vec2> placed;
  const Mat3 r = rotation_y(cam.angle);
  for (std::size_t b = 0; b < count; ++b) {
    bool ok = false;
    for (int tries = 0; tries < 50 && !ok; ++tries) {
      const Vec2 p(rng.uniform(-kBlobExtent, kBlobExtent), rng.uniform(-kBlobExtent, kBlobExtent));
      ok = std::all_of(placed.begin(), placed.end(),
                       [&](const Vec2& q) { return (p - q).norm() >= kBlobSeparation * cfg.blob_radius; });
      if (ok) {
        placed.push_back(p);
        const Vec3 world_pos = cam.translation + r * Vec3(p.x(), p.y(), 0.0);
        world.blobs.push_back({world_pos, static_cast<int>(rng.below(kPalette.size()))});
      }
    }
    if (!ok) return false;
  }
  return true;
}

}  // namespace

void GenConfig::validate() const {
  if (image_side < 16 || image_side % 8 != 0) throw ConfigError("image_side must be a multiple of 8 (>= 16)");
  if (head_crop < 2 || head_crop % 2 != 0 || head_crop > image_side / 2) {
    throw ConfigError("head_crop must be even and at most image_side / 2");
  }
  if (min_blobs < 1 || min_blobs > max_blobs || max_blobs > 12) throw ConfigError("blob counts must satisfy 1 <= min <= max <= 12");
  if (!(blob_radius > 0.0 && blob_radius < 0.5)) throw ConfigError("blob_radius must lie in (0, 0.5)");
  if (!(head_radius_px > 0.0) || head_radius_px > static_cast<double>(head_crop) / 2.0) {
    throw ConfigError("head_radius_px must be positive and fit in the head crop");
  }
  if (!(no_gaze_fraction >= 0.0 && no_gaze_fraction <= 1.0)) throw ConfigError("no_gaze_fraction must lie in [0,1]");
  if (!(different_scene_fraction >= 0.0 && different_scene_fraction <= 1.0)) {
    throw ConfigError("different_scene_fraction must lie in [0,1]");
  }
  if (!(max_camera_angle_deg >= 0.0 && max_camera_angle_deg < 90.0)) {
    throw ConfigError("max_camera_angle_deg must lie in [0, 90)");
  }
  if (!(view_depth > 0.0) || !(translation_jitter >= 0.0)) throw ConfigError("view_depth must be > 0 and jitter >= 0");
  if (train_count == 0) throw ConfigError("train_count must be positive");
  const double margin_px = kHeadMargin * static_cast<double>(image_side);
  if (margin_px < static_cast<double>(head_crop) / 2.0) throw ConfigError("head crop does not fit inside the image");
}

geometry::AffineT Camera::transform() const {
  const std::array<double, 4> theta{geometry::raw_from_angle(angle), translation.x(), translation.y(), translation.z()};
  return geometry::params_to_affine(geometry::TransformFamily::vertical_rot_trans, theta);
}

Vec3 Camera::to_view(const Vec3& p) const { return rotation_y(angle).transpose() * (p - translation); }

Scene gen_scene(std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  const double side = static_cast<double>(cfg.image_side);
  // Pose and labels are drawn once; only the content is redrawn on rejection,
  // so the angle stays uniform and the label rates match the config.
  const Camera camera = random_camera(rng, cfg);
  const bool no_gaze = rng.bernoulli(cfg.no_gaze_fraction);
  const bool different = cfg.extension && rng.bernoulli(cfg.different_scene_fraction);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Scene s;
    s.camera = camera;
    const std::size_t count = cfg.min_blobs + rng.below(cfg.max_blobs - cfg.min_blobs + 1);
    if (!place_blobs(rng, cfg, s.camera, count, s.world)) continue;

    // Head centre snapped to a pixel corner so the crop is symmetric about it.
    const double hx = std::round(rng.uniform(kHeadMargin, 1.0 - kHeadMargin) * side) / side;
    const double hy = std::round(rng.uniform(kHeadMargin, 1.0 - kHeadMargin) * side) / side;
    s.head = Vec3(gazecone::to_view(hx), gazecone::to_view(hy), 0.0);

    Vec3 aim;
    if (no_gaze) {
      // Aim at a point of the target plane outside the frame.
      Vec2 b;
      do {
        b = Vec2(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5));
      } while (b.cwiseAbs().maxCoeff() < 1.3);
      aim = s.camera.translation + rotation_y(s.camera.angle) * Vec3(b.x(), b.y(), 0.0);
    } else {
      const std::size_t idx = rng.below(count);
      aim = s.world.blobs[idx].position;
      s.gazed = idx;
    }
    if ((aim - s.head).norm() < kMinGazeDistance) continue;
    s.gaze_direction = (aim - s.head).normalized();
    if (std::abs(s.gaze_direction.dot(rotation_y(s.camera.angle).col(2))) < kMinIncidenceCos) continue;

    if (different) {
      s.same_scene = false;
      s.other_camera = random_camera(rng, cfg);
      const std::size_t other_count = cfg.min_blobs + rng.below(cfg.max_blobs - cfg.min_blobs + 1);
      if (!place_blobs(rng, cfg, s.other_camera, other_count, s.other_world)) continue;
    }
    if (s.gazed && s.same_scene && !project_gaze_oracle(s)) continue;
    return s;
  }
  throw GenerationError("scene constraints not satisfied after " + std::to_string(kMaxAttempts) + " attempts");
}

std::optional<Vec2> project_gaze_oracle(const Scene& scene) {
  if (!scene.gazed || !scene.same_scene) return std::nullopt;
  const geometry::PlaneFrame frame{rotation_y(scene.camera.angle).col(0), rotation_y(scene.camera.angle).col(1),
                                   scene.camera.translation};
  Vec2 beta;
  if (geometry::ray_plane_hit(scene.head, scene.gaze_direction, frame, beta) != geometry::RayHit::hit) {
    return std::nullopt;
  }
  if (beta.cwiseAbs().maxCoeff() > 1.0) return std::nullopt;
  return Vec2(to_image(beta.x()), to_image(beta.y()));
}

namespace {

double pixel_center(std::size_t index, std::size_t side) {
  return (2.0 * static_cast<double>(index) + 1.0 - static_cast<double>(side)) / static_cast<double>(side);
}

void paint_background(Tensor& img, const Vec2& tint, double angle) {
  const std::size_t n = img.dim(1);
  const double ramp = kRampAmplitude * std::sin(angle);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      img[(0 * n + r) * n + c] = tint.x();
      img[(1 * n + r) * n + c] = tint.y();
      img[(2 * n + r) * n + c] = 0.5 + ramp * pixel_center(c, n);
    }
  }
}

struct Projected {
  Vec2 center;
  double depth;
  int color;
};

void paint_blobs(Tensor& img, std::vector<Projected> blobs, double radius) {
  const std::size_t n = img.dim(1);
  std::stable_sort(blobs.begin(), blobs.end(), [](const Projected& a, const Projected& b) { return a.depth > b.depth; });
  for (const auto& b : blobs) {
    for (std::size_t r = 0; r < n; ++r) {
      const double y = pixel_center(r, n);
      if (std::abs(y - b.center.y()) > radius) continue;
      for (std::size_t c = 0; c < n; ++c) {
        const double x = pixel_center(c, n);
        if ((Vec2(x, y) - b.center).squaredNorm() > radius * radius) continue;
        img[(0 * n + r) * n + c] = kPalette[b.color][0];
        img[(1 * n + r) * n + c] = kPalette[b.color][1];
        img[(2 * n + r) * n + c] = 0.0;
      }
    }
  }
}

// Head pattern: a disc whose channel 0 ramps along the in-plane gaze
// direction, channel 1 encodes elevation, channel 2 marks the head.
void paint_head(std::span<double> img, std::size_t n, const Vec2& center, const Vec3& dir, double radius) {
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Vec2 off = Vec2(pixel_center(c, n), pixel_center(r, n)) - center;
      if (off.norm() > radius) continue;
      img[(0 * n + r) * n + c] = 0.5 + 0.5 * (off.x() * dir.x() + off.y() * dir.y()) / radius;
      img[(1 * n + r) * n + c] = 0.5 + 0.5 * dir.z();
      img[(2 * n + r) * n + c] = 1.0;
    }
  }
}

}  // namespace

Tensor render_head_patch(const Vec3& direction, const GenConfig& cfg, double fill) {
  const std::size_t n = cfg.head_crop;
  Tensor patch({kChannels, n, n}, fill);
  // Pixel size of the patch equals that of the full image.
  const double scale = static_cast<double>(cfg.image_side) / static_cast<double>(n);
  const double radius = 2.0 * cfg.head_radius_px / static_cast<double>(cfg.image_side) * scale;
  paint_head(patch.data(), n, Vec2::Zero(), direction, radius);
  return patch;
}

Sample render_views(const Scene& scene, const GenConfig& cfg) {
  const std::size_t n = cfg.image_side;
  Sample s;
  s.source = Tensor({kChannels, n, n});
  s.target = Tensor({kChannels, n, n});

  paint_background(s.source, scene.world.tint, 0.0);
  std::vector<Projected> src;
  for (const auto& b : scene.world.blobs) src.push_back({b.position.head<2>(), b.position.z(), b.color});
  paint_blobs(s.source, src, cfg.blob_radius);
  const double head_radius = 2.0 * cfg.head_radius_px / static_cast<double>(n);
  paint_head(s.source.data(), n, scene.head.head<2>(), scene.gaze_direction, head_radius);

  const World& tw = scene.same_scene ? scene.world : scene.other_world;
  const Camera& tc = scene.same_scene ? scene.camera : scene.other_camera;
  paint_background(s.target, tw.tint, tc.angle);
  std::vector<Projected> tgt;
  for (const auto& b : tw.blobs) {
    const Vec3 v = tc.to_view(b.position);
    tgt.push_back({v.head<2>(), v.z(), b.color});
  }
  paint_blobs(s.target, tgt, cfg.blob_radius);

  // Head crop: head centre sits on a pixel corner.
  const std::size_t crop = cfg.head_crop;
  const auto corner = [&](double v) {
    return static_cast<std::size_t>(std::lround(to_image(v) * static_cast<double>(n)));
  };
  const std::size_t c0 = corner(scene.head.x()) - crop / 2, r0 = corner(scene.head.y()) - crop / 2;
  s.head = Tensor({kChannels, crop, crop});
  for (std::size_t ch = 0; ch < kChannels; ++ch) {
    for (std::size_t r = 0; r < crop; ++r) {
      for (std::size_t c = 0; c < crop; ++c) s.head[(ch * crop + r) * crop + c] = s.source[(ch * n + r0 + r) * n + c0 + c];
    }
  }

  s.eye = Vec2(to_image(scene.head.x()), to_image(scene.head.y()));
  s.gaze = project_gaze_oracle(scene);
  s.same_scene = scene.same_scene;
  s.camera_angle = scene.camera.angle;
  s.gaze_direction = scene.gaze_direction;
  return s;
}

std::vector<Sample> generate(std::uint64_t seed, const GenConfig& cfg, std::size_t count, std::size_t first) {
  cfg.validate();
  std::vector<Sample> out(count);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
    try {
      out[i] = render_views(gen_scene(stream_seed(seed, first + i), cfg), cfg);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

SplitData generate_split(std::uint64_t seed, const GenConfig& cfg) {
  return {generate(seed, cfg, cfg.train_count, 0), generate(seed, cfg, cfg.test_count, cfg.train_count)};
}

}  // namespace gazecone::synth

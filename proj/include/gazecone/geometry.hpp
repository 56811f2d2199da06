#pragma once

// Gaze-cone geometry: the cone quadric, the affine families relating the two
// views, and the soft cone-plane intersection map with its exact gradient.
//
// Coordinates: the source view is the square Z = [-1,1]^2 x {0}, first axis
// horizontal (image columns, rightwards), second axis vertical (image rows,
// downwards), third axis pointing into the scene. Rotations are right-handed
// in this frame; a vertical-axis rotation by +pi/2 maps e1 to (0,0,-1) and e3
// to (1,0,0).

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gazecone/kernels.hpp"

namespace gazecone::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kApertureMin = 1e-4;
inline constexpr double kApertureMax = 1.0 - 1e-4;

/// Gaze cone with apex on the source plane.
///
/// `aperture` is the squared cosine of the half-angle, so larger values give
/// narrower cones. The quadric (p - apex)^T M (p - apex) = 0 with
/// M = v v^T - aperture * I describes both nappes.
struct Cone {
  Vec3 apex = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double aperture = 0.5;
  double head_radius = 0.0;
};

// Builds a cone from unconstrained values: direction is normalised,
// aperture = sigmoid(aperture_raw) clamped to [1e-4, 1-1e-4], head radius =
// softplus(radius_raw), apex = (eye.x, eye.y, 0). `eye` is in view
// coordinates ([-1,1]^2). Throws DegenerateError when |direction_raw| <= 1e-8.
Cone make_cone(const Vec2& eye, const Vec3& direction_raw, double aperture_raw, double radius_raw);

Mat3 cone_matrix(const Cone& cone);
// (p - apex)^T M (p - apex)
double cone_form(const Cone& cone, const Vec3& p);

enum class TransformFamily { identity, translation, rotation_x, vertical_rot_trans, rot3_trans, full_affine };

std::size_t parameter_count(TransformFamily family);
std::string to_string(TransformFamily family);
TransformFamily parse_family(const std::string& name);

/// Affine map z -> linear * z + translation, built from a family's raw
/// parameter vector. Angles come from raw values through pi * tanh(raw).
struct AffineT {
  Mat3 linear = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  TransformFamily family = TransformFamily::identity;
  std::vector<double> theta;
};

// Raw value that params_to_affine turns into `angle` (inverse of pi*tanh).
double raw_from_angle(double angle);
double angle_from_raw(double raw);

AffineT params_to_affine(TransformFamily family, std::span<const double> theta);
Vec3 apply_affine(const AffineT& t, const Vec3& z);

/// Target plane in source coordinates: p = origin + b1 * v1 + b2 * v2.
struct PlaneFrame {
  Vec3 v1 = Vec3::UnitX();
  Vec3 v2 = Vec3::UnitY();
  Vec3 origin = Vec3::Zero();

  Vec3 point(double b1, double b2) const { return origin + b1 * v1 + b2 * v2; }
};

PlaneFrame plane_frame(const AffineT& t);

struct SigmaMatrix {
  Mat3 sigma;
  // The plane passes through the apex, so sigma has rank <= 2.
  bool degenerate = false;
};

// Sigma = P^T M P with P = [v1 | v2 | origin - apex], so that for
// beta = (b1, b2, 1), beta^T Sigma beta = (p - apex)^T M (p - apex) at
// p = frame.point(b1, b2).
SigmaMatrix sigma_matrix(const Cone& cone, const PlaneFrame& frame);

/// k x k grid over [-1,1]^2. Cell (i, j) is row i, column j; its centre is
/// (b1, b2) = ((2j+1-k)/k, (2i+1-k)/k).
class SpatialMap {
 public:
  SpatialMap() = default;
  explicit SpatialMap(std::size_t side, double fill = 0.0);
  SpatialMap(std::size_t side, std::vector<double> values);

  std::size_t side() const noexcept { return side_; }
  double& at(std::size_t i, std::size_t j) { return values_[i * side_ + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * side_ + j]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  static double cell_center(std::size_t index, std::size_t side) {
    return (2.0 * static_cast<double>(index) + 1.0 - static_cast<double>(side)) / static_cast<double>(side);
  }
  // Cell index containing coordinate b in [-1,1]; b == 1 falls in the last cell.
  static std::size_t cell_of(double b, std::size_t side);

  bool operator==(const SpatialMap&) const = default;

 private:
  std::size_t side_ = 0;
  std::vector<double> values_;
};

struct IntersectOptions {
  double kappa = 10.0;     // temperature on beta^T Sigma beta
  double kappa_h = 50.0;   // sharpness of the two suppression masks
  bool halfspace_mask = true;
  bool head_mask = true;
};

// value(b) = sigmoid(kappa * beta^T Sigma beta) * H * B where
// H = sigmoid(kappa_h * (p - apex) . v) removes the backward nappe and
// B = sigmoid(kappa_h * (|p - apex| - r)) removes the ball around the head.
SpatialMap intersect_map(const Cone& cone, const PlaneFrame& frame, std::size_t k, const IntersectOptions& opts = {});

/// Unconstrained inputs of the intersection layer.
struct GeometryParams {
  Vec2 eye = Vec2::Zero();  // view coordinates
  Vec3 direction_raw = Vec3::UnitZ();
  double aperture_raw = 0.0;
  double radius_raw = 0.0;
  TransformFamily family = TransformFamily::identity;
  std::vector<double> theta;
};

struct GeometryGrads {
  Vec2 eye = Vec2::Zero();
  Vec3 direction_raw = Vec3::Zero();
  double aperture_raw = 0.0;
  double radius_raw = 0.0;
  std::vector<double> theta;
};

SpatialMap intersect_map(const GeometryParams& params, std::size_t k, const IntersectOptions& opts = {});

// Gradient of sum(upstream * intersect_map(params)) with respect to every
// unconstrained input.
GeometryGrads intersect_map_backward(const GeometryParams& params, std::size_t k, const IntersectOptions& opts,
                                     const SpatialMap& upstream);

struct RayCastResult {
  SpatialMap mask;  // 1 where at least one ray landed, else 0
  std::size_t rays = 0, hits = 0, skipped = 0;
  // More than 90% of the rays ran parallel to the plane.
  bool degenerate = false;
};

// Monte Carlo reference for the forward nappe: n_rays directions uniform over
// the spherical cap of half-angle acos(sqrt(aperture)) around the axis, each
// intersected exactly with the plane. Rays are seeded per index, so the result
// is independent of the backend's thread count.
RayCastResult ray_cast_oracle(const Cone& cone, const PlaneFrame& frame, std::size_t n_rays, std::size_t k,
                              std::uint64_t seed, kernels::Backend backend = kernels::Backend::parallel);

enum class RayHit { hit, parallel, behind };

// Intersection of the ray origin + s * dir (s > 0) with the plane; on a hit,
// `beta` receives the plane coordinates (b1, b2).
RayHit ray_plane_hit(const Vec3& origin, const Vec3& dir, const PlaneFrame& frame, Vec2& beta);

}  // namespace gazecone::geometry

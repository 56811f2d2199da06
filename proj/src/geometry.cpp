#include "gazecone/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gazecone/errors.hpp"
#include "gazecone/nn.hpp"
#include "gazecone/random.hpp"

namespace gazecone::geometry {

using nn::sigmoid;
using nn::softplus;

Cone make_cone(const Vec2& eye, const Vec3& direction_raw, double aperture_raw, double radius_raw) {
  const double norm = direction_raw.norm();
  if (!(norm > 1e-8)) throw DegenerateError("cone direction has near-zero norm");
  Cone c;
  c.apex = Vec3(eye.x(), eye.y(), 0.0);
  c.direction = direction_raw / norm;
  c.aperture = std::clamp(sigmoid(aperture_raw), kApertureMin, kApertureMax);
  c.head_radius = softplus(radius_raw);
  return c;
}

Mat3 cone_matrix(const Cone& cone) {
  return cone.direction * cone.direction.transpose() - cone.aperture * Mat3::Identity();
}

double cone_form(const Cone& cone, const Vec3& p) {
  const Vec3 d = p - cone.apex;
  return d.dot(cone_matrix(cone) * d);
}

std::size_t parameter_count(TransformFamily family) {
  switch (family) {
    case TransformFamily::identity: return 0;
    case TransformFamily::translation: return 3;
    case TransformFamily::rotation_x: return 1;
    case TransformFamily::vertical_rot_trans: return 4;
    case TransformFamily::rot3_trans: return 6;
    case TransformFamily::full_affine: return 12;
  }
  return 0;
}

std::string to_string(TransformFamily family) {
  switch (family) {
    case TransformFamily::identity: return "identity";
    case TransformFamily::translation: return "translation";
    case TransformFamily::rotation_x: return "rotation_x";
    case TransformFamily::vertical_rot_trans: return "vertical_rot_trans";
    case TransformFamily::rot3_trans: return "rot3_trans";
    case TransformFamily::full_affine: return "full_affine";
  }
  return "?";
}

TransformFamily parse_family(const std::string& name) {
  for (auto f : {TransformFamily::identity, TransformFamily::translation, TransformFamily::rotation_x,
                 TransformFamily::vertical_rot_trans, TransformFamily::rot3_trans, TransformFamily::full_affine}) {
    if (to_string(f) == name) return f;
  }
  throw ConfigError("unknown transform family '" + name + "'");
}

double angle_from_raw(double raw) { return std::numbers::pi * std::tanh(raw); }
double raw_from_angle(double angle) { return std::atanh(angle / std::numbers::pi); }

namespace {

double angle_slope(double raw) {
  const double th = std::tanh(raw);
  return std::numbers::pi * (1.0 - th * th);
}

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}
Mat3 rot_x_d(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}
Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}
Mat3 rot_y_d(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}
Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}
Mat3 rot_z_d(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

double frobenius_dot(const Mat3& a, const Mat3& b) { return (a.array() * b.array()).sum(); }

// Chains gradients of (linear, translation) back to the family's raw parameters.
std::vector<double> affine_backward(TransformFamily family, std::span<const double> th, const Mat3& g_linear,
                                    const Vec3& g_translation) {
  std::vector<double> g(th.size(), 0.0);
  switch (family) {
    case TransformFamily::identity:
      break;
    case TransformFamily::translation:
      for (int i = 0; i < 3; ++i) g[i] = g_translation(i);
      break;
    case TransformFamily::rotation_x:
      g[0] = frobenius_dot(g_linear, rot_x_d(angle_from_raw(th[0]))) * angle_slope(th[0]);
      break;
    case TransformFamily::vertical_rot_trans:
      g[0] = frobenius_dot(g_linear, rot_y_d(angle_from_raw(th[0]))) * angle_slope(th[0]);
      for (int i = 0; i < 3; ++i) g[1 + i] = g_translation(i);
      break;
    case TransformFamily::rot3_trans: {
      const double a = angle_from_raw(th[0]), b = angle_from_raw(th[1]), c = angle_from_raw(th[2]);
      g[0] = frobenius_dot(g_linear, rot_x_d(a) * rot_y(b) * rot_z(c)) * angle_slope(th[0]);
      g[1] = frobenius_dot(g_linear, rot_x(a) * rot_y_d(b) * rot_z(c)) * angle_slope(th[1]);
      g[2] = frobenius_dot(g_linear, rot_x(a) * rot_y(b) * rot_z_d(c)) * angle_slope(th[2]);
      for (int i = 0; i < 3; ++i) g[3 + i] = g_translation(i);
      break;
    }
    case TransformFamily::full_affine:
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) g[3 * r + c] = g_linear(r, c);
      }
      for (int i = 0; i < 3; ++i) g[9 + i] = g_translation(i);
      break;
  }
  return g;
}

}  // namespace

AffineT params_to_affine(TransformFamily family, std::span<const double> theta) {
  if (theta.size() != parameter_count(family)) {
    throw ConfigError("transform family " + to_string(family) + " takes " +
                      std::to_string(parameter_count(family)) + " parameters, got " + std::to_string(theta.size()));
  }
  AffineT t;
  t.family = family;
  t.theta.assign(theta.begin(), theta.end());
  switch (family) {
    case TransformFamily::identity:
      break;
    case TransformFamily::translation:
      t.translation = Vec3(theta[0], theta[1], theta[2]);
      break;
    case TransformFamily::rotation_x:
      t.linear = rot_x(angle_from_raw(theta[0]));
      break;
    case TransformFamily::vertical_rot_trans:
      t.linear = rot_y(angle_from_raw(theta[0]));
      t.translation = Vec3(theta[1], theta[2], theta[3]);
      break;
    case TransformFamily::rot3_trans:
      t.linear = rot_x(angle_from_raw(theta[0])) * rot_y(angle_from_raw(theta[1])) * rot_z(angle_from_raw(theta[2]));
      t.translation = Vec3(theta[3], theta[4], theta[5]);
      break;
    case TransformFamily::full_affine:
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) t.linear(r, c) = theta[3 * r + c];
      }
      t.translation = Vec3(theta[9], theta[10], theta[11]);
      break;
  }
  return t;
}

Vec3 apply_affine(const AffineT& t, const Vec3& z) { return t.linear * z + t.translation; }

PlaneFrame plane_frame(const AffineT& t) {
  return PlaneFrame{t.linear.col(0), t.linear.col(1), t.translation};
}

namespace {

Mat3 frame_matrix(const Cone& cone, const PlaneFrame& frame) {
  Mat3 p;
  p.col(0) = frame.v1;
  p.col(1) = frame.v2;
  p.col(2) = frame.origin - cone.apex;
  return p;
}

}  // namespace

SigmaMatrix sigma_matrix(const Cone& cone, const PlaneFrame& frame) {
  const Mat3 p = frame_matrix(cone, frame);
  const Mat3 sigma = p.transpose() * cone_matrix(cone) * p;
  const double scale = frame.v1.norm() * frame.v2.norm() * std::max(1.0, p.col(2).norm());
  return {sigma, std::abs(p.determinant()) <= 1e-12 * scale};
}

SpatialMap::SpatialMap(std::size_t side, double fill) : side_(side), values_(side * side, fill) {
  if (side == 0) throw DimensionError("spatial map side must be positive");
}

SpatialMap::SpatialMap(std::size_t side, std::vector<double> values) : side_(side), values_(std::move(values)) {
  if (side == 0) throw DimensionError("spatial map side must be positive");
  if (values_.size() != side * side) {
    throw DimensionError("spatial map of side " + std::to_string(side) + " needs " + std::to_string(side * side) +
                         " values, got " + std::to_string(values_.size()));
  }
}

std::size_t SpatialMap::cell_of(double b, std::size_t side) {
  const double u = (b + 1.0) * 0.5 * static_cast<double>(side);
  if (!(u > 0.0)) return 0;
  return std::min(side - 1, static_cast<std::size_t>(u));
}

namespace {

struct CellTerms {
  double quad, axial, dist;     // beta^T Sigma beta, (p-a).v, |p-a|
  double a, h, b;               // the three sigmoid factors
};

CellTerms cell_terms(const Mat3& sigma, const Mat3& pm, const Cone& cone, double b1, double b2,
                     const IntersectOptions& opts) {
  const Vec3 beta(b1, b2, 1.0);
  CellTerms t{};
  t.quad = beta.dot(sigma * beta);
  t.a = sigmoid(opts.kappa * t.quad);
  const Vec3 d = pm * beta;
  t.axial = d.dot(cone.direction);
  t.dist = d.norm();
  t.h = opts.halfspace_mask ? sigmoid(opts.kappa_h * t.axial) : 1.0;
  t.b = opts.head_mask ? sigmoid(opts.kappa_h * (t.dist - cone.head_radius)) : 1.0;
  return t;
}

}  // namespace

SpatialMap intersect_map(const Cone& cone, const PlaneFrame& frame, std::size_t k, const IntersectOptions& opts) {
  if (k == 0) throw DimensionError("intersect_map: k must be >= 1");
  const Mat3 sigma = sigma_matrix(cone, frame).sigma;
  const Mat3 pm = frame_matrix(cone, frame);
  SpatialMap out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double b2 = SpatialMap::cell_center(i, k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto t = cell_terms(sigma, pm, cone, SpatialMap::cell_center(j, k), b2, opts);
      out.at(i, j) = t.a * t.h * t.b;
    }
  }
  return out;
}

SpatialMap intersect_map(const GeometryParams& params, std::size_t k, const IntersectOptions& opts) {
  const Cone cone = make_cone(params.eye, params.direction_raw, params.aperture_raw, params.radius_raw);
  return intersect_map(cone, plane_frame(params_to_affine(params.family, params.theta)), k, opts);
}

GeometryGrads intersect_map_backward(const GeometryParams& params, std::size_t k, const IntersectOptions& opts,
                                     const SpatialMap& upstream) {
  if (upstream.side() != k) throw DimensionError("intersect_map_backward: upstream side does not match k");
  const Cone cone = make_cone(params.eye, params.direction_raw, params.aperture_raw, params.radius_raw);
  const AffineT affine = params_to_affine(params.family, params.theta);
  const PlaneFrame frame = plane_frame(affine);
  const Mat3 m = cone_matrix(cone);
  const Mat3 pm = frame_matrix(cone, frame);
  const Mat3 sigma = pm.transpose() * m * pm;
  const Vec3& v = cone.direction;

  Mat3 g_sigma = Mat3::Zero();
  Mat3 g_p = Mat3::Zero();  // through d = P beta (mask terms)
  Vec3 g_v = Vec3::Zero();
  double g_r = 0.0;

  for (std::size_t i = 0; i < k; ++i) {
    const double b2 = SpatialMap::cell_center(i, k);
    for (std::size_t j = 0; j < k; ++j) {
      const double g = upstream.at(i, j);
      if (g == 0.0) continue;
      const double b1 = SpatialMap::cell_center(j, k);
      const Vec3 beta(b1, b2, 1.0);
      const auto t = cell_terms(sigma, pm, cone, b1, b2, opts);
      const double gq = g * opts.kappa * t.a * (1.0 - t.a) * t.h * t.b;
      g_sigma += gq * beta * beta.transpose();
      const Vec3 d = pm * beta;
      Vec3 g_d = Vec3::Zero();
      if (opts.halfspace_mask) {
        const double gs = g * opts.kappa_h * t.h * (1.0 - t.h) * t.a * t.b;
        g_d += gs * v;
        g_v += gs * d;
      }
      if (opts.head_mask && t.dist > 0.0) {
        const double gn = g * opts.kappa_h * t.b * (1.0 - t.b) * t.a * t.h;
        g_d += (gn / t.dist) * d;
        g_r -= gn;
      }
      g_p += g_d * beta.transpose();
    }
  }

  // sigma = P^T M P with M symmetric.
  const Mat3 g_sigma_sym = g_sigma + g_sigma.transpose();
  g_p += m * pm * g_sigma_sym;
  const Mat3 g_m = pm * g_sigma * pm.transpose();
  // M = v v^T - alpha I
  g_v += (g_m + g_m.transpose()) * v;
  const double g_alpha = -g_m.trace();

  GeometryGrads out;
  // P = [v1 | v2 | t - apex], v1 = R e1, v2 = R e2.
  Mat3 g_linear = Mat3::Zero();
  g_linear.col(0) = g_p.col(0);
  g_linear.col(1) = g_p.col(1);
  const Vec3 g_t = g_p.col(2);
  const Vec3 g_apex = -g_p.col(2);
  out.eye = Vec2(g_apex.x(), g_apex.y());

  const double norm = params.direction_raw.norm();
  out.direction_raw = (g_v - v * v.dot(g_v)) / norm;

  const double s = sigmoid(params.aperture_raw);
  const bool clamped = s <= kApertureMin || s >= kApertureMax;
  out.aperture_raw = clamped ? 0.0 : g_alpha * s * (1.0 - s);
  out.radius_raw = g_r * sigmoid(params.radius_raw);
  out.theta = affine_backward(params.family, affine.theta, g_linear, g_t);
  return out;
}

RayHit ray_plane_hit(const Vec3& origin, const Vec3& dir, const PlaneFrame& frame, Vec2& beta) {
  Mat3 a;
  a.col(0) = frame.v1;
  a.col(1) = frame.v2;
  a.col(2) = -dir;
  const double det = a.determinant();
  if (std::abs(det) <= 1e-12 * frame.v1.norm() * frame.v2.norm() * dir.norm()) return RayHit::parallel;
  const Vec3 x = a.partialPivLu().solve(origin - frame.origin);
  if (!(x(2) > 0.0)) return RayHit::behind;
  beta = Vec2(x(0), x(1));
  return RayHit::hit;
}

RayCastResult ray_cast_oracle(const Cone& cone, const PlaneFrame& frame, std::size_t n_rays, std::size_t k,
                              std::uint64_t seed, kernels::Backend backend) {
  if (n_rays < 1000) throw ConfigError("ray_cast_oracle needs at least 1000 rays");
  if (k == 0) throw DimensionError("ray_cast_oracle: k must be >= 1");
  const Vec3 axis = cone.direction.normalized();
  const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 ea = axis.cross(helper).normalized();
  const Vec3 eb = axis.cross(ea);
  const double cos_max = std::sqrt(cone.aperture);

  const auto trace = [&](std::size_t ray, std::vector<std::size_t>& counts, std::size_t& hits,
                         std::size_t& skipped) {
    const std::uint64_t s = stream_seed(seed, ray);
    const double u1 = unit_double(splitmix64(s));
    const double u2 = unit_double(splitmix64(s ^ 0xD1B54A32D192ED03ULL));
    const double cos_t = 1.0 - u1 * (1.0 - cos_max);
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    const double phi = 2.0 * std::numbers::pi * u2;
    const Vec3 dir = cos_t * axis + sin_t * (std::cos(phi) * ea + std::sin(phi) * eb);
    Vec2 beta;
    switch (ray_plane_hit(cone.apex, dir, frame, beta)) {
      case RayHit::parallel: ++skipped; return;
      case RayHit::behind: return;
      case RayHit::hit: break;
    }
    if (beta.x() < -1.0 || beta.x() > 1.0 || beta.y() < -1.0 || beta.y() > 1.0) return;
    ++hits;
    ++counts[SpatialMap::cell_of(beta.y(), k) * k + SpatialMap::cell_of(beta.x(), k)];
  };

  std::vector<std::size_t> counts(k * k, 0);
  std::size_t hits = 0, skipped = 0;
  if (backend == kernels::Backend::serial) {
    for (std::size_t r = 0; r < n_rays; ++r) trace(r, counts, hits, skipped);
  } else {
#pragma omp parallel
    {
      std::vector<std::size_t> local(k * k, 0);
      std::size_t local_hits = 0, local_skipped = 0;
#pragma omp for schedule(static)
      for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n_rays); ++r) {
        trace(static_cast<std::size_t>(r), local, local_hits, local_skipped);
      }
#pragma omp critical
      {
        for (std::size_t c = 0; c < counts.size(); ++c) counts[c] += local[c];
        hits += local_hits;
        skipped += local_skipped;
      }
    }
  }

  RayCastResult out;
  out.mask = SpatialMap(k);
  for (std::size_t c = 0; c < counts.size(); ++c) out.mask.values()[c] = counts[c] > 0 ? 1.0 : 0.0;
  out.rays = n_rays;
  out.hits = hits;
  out.skipped = skipped;
  out.degenerate = static_cast<double>(skipped) > 0.9 * static_cast<double>(n_rays);
  return out;
}

}  // namespace gazecone::geometry

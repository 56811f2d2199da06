#include "gazecone/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <ostream>
#include <span>

#include "gazecone/errors.hpp"
#include "gazecone/geometry.hpp"
#include "gazecone/losses.hpp"
#include "gazecone/model.hpp"
#include "gazecone/nn.hpp"
#include "gazecone/random.hpp"

namespace gazecone::learning {

namespace {

constexpr double kLayerTol = 1e-6;
constexpr double kGeometryTol = 1e-4;
constexpr double kModelTol = 1e-3;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

// Linear functional sum_i weights[i] * outputs()[i]. Differences are taken
// per output before weighting, which keeps cancellation error small.
struct Functional {
  std::function<std::vector<double>()> outputs;
  std::vector<double> weights;
};

Functional linear(std::function<Tensor()> out, const Tensor& w) {
  return {[out] { return out().values(); }, w.values()};
}

Functional scalar(std::function<double()> out) {
  return {[out] { return std::vector<double>{out()}; }, {1.0}};
}

double weighted_difference(const Functional& f, const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d += f.weights[j] * (a[j] - b[j]);
  return d;
}

// Compares analytic[i] with the central difference of f in values[i]. When the
// two one-sided differences disagree, a ReLU or max-pool switch lies inside
// the stencil; the entry is then measured again with a step 100 times smaller.
void check(GradReport& r, const std::string& name, std::span<double> values, std::span<const double> analytic,
           const Functional& f) {
  GradEntry e;
  e.name = name;
  const auto base = f.outputs();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    double numeric = 0.0;
    for (double h : {r.step, r.step / 100.0}) {
      values[i] = keep + h;
      const auto up = f.outputs();
      values[i] = keep - h;
      const auto down = f.outputs();
      values[i] = keep;
      numeric = weighted_difference(f, up, down) / (2.0 * h);
      const double fwd = weighted_difference(f, up, base) / h, bwd = weighted_difference(f, base, down) / h;
      const bool kink = relative_error(fwd, bwd) > r.tolerance && relative_error(analytic[i], numeric) >= r.tolerance;
      if (!kink || h != r.step) break;
      ++e.kinks;
    }
    e.max_rel_err = std::max(e.max_rel_err, relative_error(analytic[i], numeric));
    e.max_abs_err = std::max(e.max_abs_err, std::abs(analytic[i] - numeric));
    ++e.checked;
  }
  r.max_rel_err = std::max(r.max_rel_err, e.max_rel_err);
  r.entries.push_back(e);
}

GradReport check_dense(std::uint64_t seed) {
  GradReport r{"dense", 1e-5, kLayerTol, 0.0, {}};
  Rng rng(seed);
  Tensor x = random_tensor({3, 5}, rng);
  nn::LayerParams p(random_tensor({5, 4}, rng), random_tensor({4}, rng));
  const Tensor w = random_tensor({3, 4}, rng);
  const auto f = linear([&] { return nn::dense_forward(x, p, nn::Backend::serial); }, w);
  p.zero_grad();
  const Tensor dx = nn::dense_backward(x, w, p, nn::Backend::serial);
  check(r, "weight", p.weight.data(), p.weight_grad.data(), f);
  check(r, "bias", p.bias.data(), p.bias_grad.data(), f);
  check(r, "input", x.data(), dx.data(), f);
  return r;
}

GradReport check_conv(std::uint64_t seed) {
  GradReport r{"conv2d", 1e-5, kLayerTol, 0.0, {}};
  Rng rng(seed);
  const std::pair<std::size_t, std::size_t> configs[] = {{1, 1}, {2, 1}, {1, 0}};
  for (const auto& [stride, pad] : configs) {
    Tensor x = random_tensor({2, 2, 6, 6}, rng);
    nn::LayerParams p(random_tensor({3, 2, 3, 3}, rng, 0.5), random_tensor({3}, rng));
    const Tensor y0 = nn::conv2d_forward(x, p, stride, pad, nn::Backend::serial);
    const Tensor w = random_tensor(y0.shape(), rng);
    const auto f = linear([&] { return nn::conv2d_forward(x, p, stride, pad, nn::Backend::serial); }, w);
    p.zero_grad();
    const Tensor dx = nn::conv2d_backward(x, w, p, stride, pad, nn::Backend::serial);
    const std::string tag = "[stride " + std::to_string(stride) + ", pad " + std::to_string(pad) + "]";
    check(r, "weight " + tag, p.weight.data(), p.weight_grad.data(), f);
    check(r, "bias " + tag, p.bias.data(), p.bias_grad.data(), f);
    check(r, "input " + tag, x.data(), dx.data(), f);
  }
  return r;
}

GradReport check_activation(nn::ActivationKind kind, std::uint64_t seed) {
  GradReport r{nn::to_string(kind) == "maxpool2x2" ? "maxpool" : nn::to_string(kind), 1e-5, kLayerTol, 0.0, {}};
  Rng rng(seed);
  Tensor x;
  if (kind == nn::ActivationKind::maxpool2x2) {
    // Distinct, well separated values so no perturbation changes a winner.
    x = Tensor({2, 2, 4, 4});
    std::vector<double> levels(x.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.1 * static_cast<double>(i);
    for (std::size_t i = levels.size(); i > 1; --i) std::swap(levels[i - 1], levels[rng.below(i)]);
    std::copy(levels.begin(), levels.end(), x.data().begin());
  } else {
    x = random_tensor({3, 6}, rng);
    // Keep relu inputs away from the kink.
    for (auto& v : x.data()) v = std::copysign(0.1 + std::abs(v), v);
  }
  const Tensor y = nn::activation_forward(x, kind);
  const Tensor w = random_tensor(y.shape(), rng);
  const auto f = linear([&] { return nn::activation_forward(x, kind); }, w);
  const Tensor dx = nn::activation_backward(x, y, w, kind);
  check(r, "input", x.data(), dx.data(), f);
  return r;
}

GradReport check_losses(std::uint64_t seed) {
  GradReport r{"losses", 1e-5, kLayerTol, 0.0, {}};
  Rng rng(seed);
  std::vector<double> logits(grids::kGridCount * grids::kClasses);
  for (auto& v : logits) v = rng.normal();
  const geometry::Vec2 y(rng.uniform(), rng.uniform());
  const std::pair<std::optional<geometry::Vec2>, bool> cases[] = {{y, true}, {y, false}, {std::nullopt, false}};
  for (const auto& [target, masked] : cases) {
    const auto f = scalar([&] { return shifted_grids_loss(logits, target, masked).value; });
    const auto g = shifted_grids_loss(logits, target, masked);
    check(r, std::string("shifted grids ") + (target ? "point" : "no-gaze") + (masked ? ", masked" : ""), logits,
          g.grad, f);
  }
  for (bool same : {true, false}) {
    double gamma = rng.uniform(0.1, 0.9);
    const auto f = scalar([&] { return scene_change_loss(gamma, same).value; });
    const double g = scene_change_loss(gamma, same).grad;
    check(r, same ? "scene change, same" : "scene change, different", std::span<double>(&gamma, 1),
          std::span<const double>(&g, 1), f);
  }
  return r;
}

GradReport check_geometry(std::uint64_t seed) {
  GradReport r{"geometry", 1e-5, kGeometryTol, 0.0, {}};
  Rng rng(seed);
  const std::size_t k = 13;
  const geometry::IntersectOptions opts{};
  for (auto family : {geometry::TransformFamily::identity, geometry::TransformFamily::translation,
                      geometry::TransformFamily::rotation_x, geometry::TransformFamily::vertical_rot_trans,
                      geometry::TransformFamily::rot3_trans, geometry::TransformFamily::full_affine}) {
    geometry::GeometryParams p;
    p.eye = geometry::Vec2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    p.direction_raw = geometry::Vec3(rng.normal() * 0.5, rng.normal() * 0.5, 1.0 + rng.uniform());
    p.aperture_raw = rng.uniform(-1.0, 1.0);
    p.family = family;
    p.theta.resize(geometry::parameter_count(family));
    for (auto& t : p.theta) t = 0.2 * rng.normal();
    if (family == geometry::TransformFamily::full_affine) {
      // Near the identity so the plane stays in front of the eye.
      const double base[] = {1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0.5};
      for (std::size_t i = 0; i < p.theta.size(); ++i) p.theta[i] = base[i] + 0.1 * rng.normal();
    } else if (!p.theta.empty() && family != geometry::TransformFamily::rotation_x) {
      p.theta.back() += 0.5;  // translation along depth
    }
    // Head ball reaching slightly past the plane, so its boundary crosses cells.
    {
      const auto frame = geometry::plane_frame(geometry::params_to_affine(family, p.theta));
      const geometry::Vec3 normal = frame.v1.cross(frame.v2).normalized();
      const double dist = std::abs(normal.dot(geometry::Vec3(p.eye.x(), p.eye.y(), 0.0) - frame.origin));
      const double radius = dist + rng.uniform(0.1, 0.4);
      p.radius_raw = std::log(std::expm1(radius));
    }
    geometry::SpatialMap up(k);
    for (auto& v : up.values()) v = rng.normal();
    const Functional f{[&] {
                         const auto m = geometry::intersect_map(p, k, opts);
                         return std::vector<double>(m.values().begin(), m.values().end());
                       },
                       std::vector<double>(up.values().begin(), up.values().end())};
    const auto g = geometry::intersect_map_backward(p, k, opts, up);
    const std::string tag = " [" + geometry::to_string(family) + "]";
    check(r, "eye" + tag, std::span<double>(p.eye.data(), 2), std::span<const double>(g.eye.data(), 2), f);
    check(r, "direction" + tag, std::span<double>(p.direction_raw.data(), 3),
          std::span<const double>(g.direction_raw.data(), 3), f);
    check(r, "aperture" + tag, std::span<double>(&p.aperture_raw, 1), std::span<const double>(&g.aperture_raw, 1), f);
    check(r, "radius" + tag, std::span<double>(&p.radius_raw, 1), std::span<const double>(&g.radius_raw, 1), f);
    if (!p.theta.empty()) check(r, "theta" + tag, p.theta, g.theta, f);
  }
  return r;
}

GradReport check_model(std::uint64_t seed) {
  GradReport r{"model", 1e-4, kModelTol, 0.0, {}};
  Rng rng(seed);
  model::ModelConfig cfg;
  cfg.image_side = 16;
  cfg.head_crop = 4;
  cfg.k = 5;
  cfg.saliency_channels = 2;
  cfg.transform_channels = 3;
  cfg.transform_merge_channels = 3;
  cfg.cone_hidden1 = 6;
  cfg.cone_hidden2 = 4;
  cfg.transform_hidden1 = 8;
  cfg.transform_hidden2 = 8;
  cfg.extension = true;
  cfg.seed = seed;
  model::GazeModel m(cfg);
  m.set_backend(nn::Backend::serial);
  // Zero biases put ReLUs fed by all-zero inputs exactly on their kink; move
  // to a generic point.
  for (auto* p : m.parameters()) {
    for (auto& b : p->bias.data()) b += 0.1 * rng.normal();
  }
  // Aim the cone into the scene and place the target plane in front of the
  // eye, so the intersection carries gradient.
  auto named = m.named_parameters();
  const auto find = [&](const std::string& name) {
    for (auto& [n, p] : named) {
      if (n == name) return p;
    }
    throw StateError("missing parameter " + name);
  };
  find("cone.2")->bias[2] += 1.0;
  find("cone.2")->bias[3] -= 1.0;
  find("transform.head.3")->bias[3] += 0.5;

  const std::size_t n = 2;
  model::Batch batch;
  batch.source = Tensor({n, 3, 16, 16});
  batch.target = Tensor({n, 3, 16, 16});
  batch.head = Tensor({n, 3, 4, 4});
  batch.eye = Tensor({n, 2});
  for (Tensor* t : {&batch.source, &batch.target, &batch.head}) {
    for (auto& v : t->data()) v = rng.uniform();
  }
  for (auto& v : batch.eye.data()) v = rng.uniform(0.2, 0.8);
  model::ForwardTrace trace;
  m.forward(batch, &trace);
  const Tensor w_logits = random_tensor(trace.result.logits.shape(), rng);
  const Tensor w_gamma = random_tensor({n}, rng);
  Functional f{[&] {
                 const auto res = m.forward(batch);
                 auto out = res.logits.values();
                 out.insert(out.end(), res.gamma.data().begin(), res.gamma.data().end());
                 return out;
               },
               w_logits.values()};
  f.weights.insert(f.weights.end(), w_gamma.data().begin(), w_gamma.data().end());
  m.zero_grad();
  m.backward(trace, w_logits, w_gamma);
  for (auto& [name, p] : m.named_parameters()) {
    const Tensor gw = p->weight_grad, gb = p->bias_grad;
    check(r, name + ".weight", p->weight.data(), gw.data(), f);
    check(r, name + ".bias", p->bias.data(), gb.data(), f);
  }
  return r;
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names{"dense",   "conv2d", "relu",     "sigmoid", "softmax",
                                              "maxpool", "losses", "geometry", "model"};
  return names;
}

GradReport gradcheck(const std::string& component, std::uint64_t seed) {
  if (component == "dense") return check_dense(seed);
  if (component == "conv2d") return check_conv(seed);
  if (component == "relu") return check_activation(nn::ActivationKind::relu, seed);
  if (component == "sigmoid") return check_activation(nn::ActivationKind::sigmoid, seed);
  if (component == "softmax") return check_activation(nn::ActivationKind::softmax, seed);
  if (component == "maxpool") return check_activation(nn::ActivationKind::maxpool2x2, seed);
  if (component == "losses") return check_losses(seed);
  if (component == "geometry") return check_geometry(seed);
  if (component == "model") return check_model(seed);
  throw ConfigError("unknown gradcheck component '" + component + "'");
}

void GradReport::print(std::ostream& out) const {
  std::size_t w = 9;
  for (const auto& e : entries) w = std::max(w, e.name.size());
  out << "component " << component << "  step " << step << "  tolerance " << tolerance << '\n';
  out << std::left << std::setw(static_cast<int>(w)) << "parameter" << std::right << std::setw(8) << "checked"
      << std::setw(7) << "kinks" << std::setw(14) << "max rel err" << std::setw(14) << "max abs err" << '\n';
  out << std::scientific << std::setprecision(3);
  for (const auto& e : entries) {
    out << std::left << std::setw(static_cast<int>(w)) << e.name << std::right << std::setw(8) << e.checked
        << std::setw(7) << e.kinks << std::setw(14) << e.max_rel_err << std::setw(14) << e.max_abs_err << '\n';
  }
  out << "max rel err " << max_rel_err << (passed() ? "  PASS" : "  FAIL") << '\n';
  out << std::defaultfloat;
}

}  // namespace gazecone::learning

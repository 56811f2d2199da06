#include "gazecone/model.hpp"

#include <algorithm>
#include <cmath>

#include "gazecone/errors.hpp"

namespace gazecone::model {

using geometry::SpatialMap;
using geometry::Vec2;
using geometry::Vec3;
using nn::ActivationKind;

void ModelConfig::validate() const {
  if (image_side < 8 || image_side % 8 != 0) throw ConfigError("image_side must be a multiple of 8 (>= 8)");
  if (channels == 0 || head_crop == 0 || k == 0) throw ConfigError("channels, head_crop and k must be positive");
  if (saliency_channels == 0 || transform_channels == 0 || transform_merge_channels == 0) {
    throw ConfigError("pathway channel counts must be positive");
  }
  if (cone_hidden1 == 0 || cone_hidden2 == 0 || transform_hidden1 == 0 || transform_hidden2 == 0) {
    throw ConfigError("hidden widths must be positive");
  }
  if (!(kappa > 0) || !(kappa_h > 0)) throw ConfigError("temperatures must be positive");
}

std::pair<std::size_t, std::size_t> ModelConfig::saliency_kernel() const {
  const std::size_t half = image_side / 2;
  const std::size_t pad = half >= k ? 0 : (k - half + 2) / 2;
  return {half + 2 * pad - k + 1, pad};
}

namespace {

void copy_image(const Tensor& src, bool flip, std::span<double> dst) {
  const std::size_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        dst[(ch * h + r) * w + col] = src[(ch * h + r) * w + (flip ? w - 1 - col : col)];
      }
    }
  }
}

Tensor flip_image(const Tensor& img) {
  Tensor out(img.shape());
  copy_image(img, true, out.data());
  return out;
}

}  // namespace

Sample mirrored(const Sample& s) {
  Sample m = s;
  m.source = flip_image(s.source);
  m.head = flip_image(s.head);
  m.target = flip_image(s.target);
  m.eye.x() = 1.0 - s.eye.x();
  if (s.gaze) m.gaze = Vec2(1.0 - s.gaze->x(), s.gaze->y());
  m.camera_angle = -s.camera_angle;
  m.gaze_direction.x() = -s.gaze_direction.x();
  return m;
}

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices, std::span<const bool> flip) {
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  if (idx.empty()) {
    idx.resize(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  }
  if (idx.empty()) throw DimensionError("make_batch: no samples");
  if (!flip.empty() && flip.size() != idx.size()) throw DimensionError("make_batch: flip mask size mismatch");
  const Sample& first = samples[idx[0]];
  const std::size_t n = idx.size();
  const auto with_batch = [n](const Shape& s) {
    Shape out{n};
    out.insert(out.end(), s.begin(), s.end());
    return out;
  };
  Batch b{Tensor(with_batch(first.source.shape())), Tensor(with_batch(first.head.shape())),
          Tensor(with_batch(first.target.shape())), Tensor({n, 2})};
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[idx[i]];
    const bool f = !flip.empty() && flip[i];
    if (s.source.shape() != first.source.shape() || s.target.shape() != first.target.shape() ||
        s.head.shape() != first.head.shape()) {
      throw DimensionError("make_batch: samples have different image sizes");
    }
    copy_image(s.source, f, b.source.data().subspan(i * s.source.size(), s.source.size()));
    copy_image(s.head, f, b.head.data().subspan(i * s.head.size(), s.head.size()));
    copy_image(s.target, f, b.target.data().subspan(i * s.target.size(), s.target.size()));
    b.eye.at(i, 0) = f ? 1.0 - s.eye.x() : s.eye.x();
    b.eye.at(i, 1) = s.eye.y();
  }
  return b;
}

GazeModel::GazeModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const std::size_t c = cfg_.channels;

  const auto [kk, pad] = cfg_.saliency_kernel();
  saliency_.add(nn::make_conv(c, cfg_.saliency_channels, 3, 1, 1, rng))
      .add(nn::Activation{ActivationKind::relu})
      .add(nn::Activation{ActivationKind::maxpool2x2})
      .add(nn::make_conv(cfg_.saliency_channels, cfg_.saliency_channels, kk, 1, pad, rng))
      .add(nn::Activation{ActivationKind::relu})
      .add(nn::make_conv(cfg_.saliency_channels, 1, 1, 1, 0, rng))
      .add(nn::Activation{ActivationKind::sigmoid});

  const std::size_t cone_in = c * cfg_.head_crop * cfg_.head_crop + 2;
  auto cone_out = nn::make_dense(cfg_.cone_hidden2, 5, rng);
  // Start with a small head ball (softplus(-3) ~ 0.05).
  cone_out.params.bias[4] = -3.0;
  cone_.add(nn::make_dense(cone_in, cfg_.cone_hidden1, rng))
      .add(nn::Activation{ActivationKind::relu})
      .add(nn::make_dense(cfg_.cone_hidden1, cfg_.cone_hidden2, rng))
      .add(nn::Activation{ActivationKind::relu})
      .add(std::move(cone_out));

  if (uses_transform_net()) {
    t1_.add(nn::make_conv(c, cfg_.transform_channels, 3, 2, 1, rng))
        .add(nn::Activation{ActivationKind::relu})
        .add(nn::Activation{ActivationKind::maxpool2x2});
    const std::size_t pooled = cfg_.image_side / 8;
    t2_.add(nn::make_conv(2 * cfg_.transform_channels, cfg_.transform_merge_channels, 1, 1, 0, rng))
        .add(nn::Activation{ActivationKind::relu})
        .add(nn::Activation{ActivationKind::maxpool2x2})
        .add(nn::Flatten{})
        .add(nn::make_dense(cfg_.transform_merge_channels * pooled * pooled, cfg_.transform_hidden1, rng))
        .add(nn::Activation{ActivationKind::relu})
        .add(nn::make_dense(cfg_.transform_hidden1, cfg_.transform_hidden2, rng))
        .add(nn::Activation{ActivationKind::relu})
        .add(nn::make_dense(cfg_.transform_hidden2, theta_count() + 1, rng));
  }

  for (std::size_t g = 0; g < grids::kGridCount; ++g) {
    heads_.push_back(nn::make_dense(cfg_.k * cfg_.k, grids::kClasses, rng));
  }
}

void GazeModel::set_backend(nn::Backend b) {
  backend_ = b;
  saliency_.set_backend(b);
  cone_.set_backend(b);
  t1_.set_backend(b);
  t2_.set_backend(b);
}

namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().begin() + i * ca * hw, ca * hw, out.data().begin() + i * (ca + cb) * hw);
    std::copy_n(b.data().begin() + i * cb * hw, cb * hw, out.data().begin() + (i * (ca + cb) + ca) * hw);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, std::size_t ca) {
  const std::size_t n = x.dim(0), c = x.dim(1), cb = c - ca, hw = x.dim(2) * x.dim(3);
  Tensor a({n, ca, x.dim(2), x.dim(3)}), b({n, cb, x.dim(2), x.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().begin() + i * c * hw, ca * hw, a.data().begin() + i * ca * hw);
    std::copy_n(x.data().begin() + (i * c + ca) * hw, cb * hw, b.data().begin() + i * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace

ForwardResult GazeModel::forward(const Batch& batch, ForwardTrace* trace) const {
  const std::size_t n = batch.size();
  const std::size_t side = cfg_.image_side, k = cfg_.k, kk = k * k;
  const Shape image{n, cfg_.channels, side, side};
  if (batch.source.shape() != image || batch.target.shape() != image) {
    throw DimensionError("model expects views " + shape_str(image) + ", got source " +
                         shape_str(batch.source.shape()) + " and target " + shape_str(batch.target.shape()));
  }
  const Shape crop{n, cfg_.channels, cfg_.head_crop, cfg_.head_crop};
  if (batch.head.shape() != crop) {
    throw DimensionError("model expects head crops " + shape_str(crop) + ", got " + shape_str(batch.head.shape()));
  }
  if (batch.eye.shape() != Shape{n, 2}) throw DimensionError("model expects eye positions [batch,2]");

  ForwardResult res;
  // Saliency pathway.
  Tensor s = saliency_.forward(batch.target, trace ? &trace->saliency : nullptr);
  res.saliency = s.reshaped({n, k, k});

  // Cone pathway: flattened head crop plus the eye position in view coordinates.
  const std::size_t crop_n = batch.head.size() / n;
  Tensor cone_in({n, crop_n + 2});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(batch.head.data().begin() + i * crop_n, crop_n, cone_in.data().begin() + i * (crop_n + 2));
    cone_in.at(i, crop_n) = to_view(batch.eye.at(i, 0));
    cone_in.at(i, crop_n + 1) = to_view(batch.eye.at(i, 1));
  }
  const Tensor cone_raw = cone_.forward(cone_in, trace ? &trace->cone : nullptr);

  // Transform pathway: shared T1 on both views, T2 on the stacked features.
  const std::size_t n_theta = theta_count();
  Tensor t_out;
  if (uses_transform_net()) {
    const Tensor fs = t1_.forward(batch.source, trace ? &trace->t1_source : nullptr);
    const Tensor ft = t1_.forward(batch.target, trace ? &trace->t1_target : nullptr);
    t_out = t2_.forward(concat_channels(fs, ft), trace ? &trace->t2 : nullptr);
  }
  res.gamma = Tensor({n}, 1.0);
  Tensor gamma_logit({n});
  if (cfg_.extension) {
    for (std::size_t i = 0; i < n; ++i) {
      gamma_logit[i] = t_out.at(i, n_theta);
      res.gamma[i] = nn::sigmoid(gamma_logit[i]);
    }
  }

  // Cone-plane intersection per sample.
  res.geometry.resize(n);
  res.cone_map = Tensor({n, k, k});
  geometry::IntersectOptions opts{cfg_.kappa, cfg_.kappa_h, true, true};
  for (std::size_t i = 0; i < n; ++i) {
    auto& gp = res.geometry[i];
    gp.eye = Vec2(to_view(batch.eye.at(i, 0)), to_view(batch.eye.at(i, 1)));
    gp.direction_raw = Vec3(cone_raw.at(i, 0), cone_raw.at(i, 1), cone_raw.at(i, 2));
    gp.aperture_raw = cone_raw.at(i, 3);
    gp.radius_raw = cone_raw.at(i, 4);
    gp.family = cfg_.family;
    gp.theta.resize(n_theta);
    for (std::size_t j = 0; j < n_theta; ++j) gp.theta[j] = t_out.at(i, j);
  }
  const bool par = backend_ == nn::Backend::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const SpatialMap g = geometry::intersect_map(res.geometry[i], k, opts);
    std::copy(g.values().begin(), g.values().end(), res.cone_map.data().begin() + i * kk);
  }

  // Fusion and shifted-grids head.
  res.fused = Tensor({n, k, k});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kk; ++c) {
      res.fused[i * kk + c] = res.saliency[i * kk + c] * (res.gamma[i] * res.cone_map[i * kk + c]);
    }
  }
  const Tensor flat = res.fused.reshaped({n, kk});
  res.logits = Tensor({n, grids::kGridCount, grids::kClasses});
  for (std::size_t g = 0; g < grids::kGridCount; ++g) {
    const Tensor z = nn::dense_forward(flat, heads_[g].params, backend_);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(z.data().begin() + i * grids::kClasses, grids::kClasses,
                  res.logits.data().begin() + (i * grids::kGridCount + g) * grids::kClasses);
    }
  }

  if (trace) {
    trace->gamma_logit = gamma_logit;
    trace->result = res;
    trace->recorded = true;
  }
  return res;
}

void GazeModel::backward(const ForwardTrace& trace, const Tensor& d_logits, const Tensor& d_gamma) {
  if (!trace.recorded) throw StateError("model backward called without a recorded forward pass");
  const ForwardResult& res = trace.result;
  const std::size_t n = res.logits.dim(0), k = cfg_.k, kk = k * k;
  require_same_shape(res.logits, d_logits, "logits", "logit gradient");
  if (d_gamma.shape() != Shape{n}) throw DimensionError("gamma gradient must be [batch]");

  // Head.
  const Tensor flat = res.fused.reshaped({n, kk});
  Tensor d_fused({n, kk});
  for (std::size_t g = 0; g < grids::kGridCount; ++g) {
    Tensor dz({n, grids::kClasses});
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(d_logits.data().begin() + (i * grids::kGridCount + g) * grids::kClasses, grids::kClasses,
                  dz.data().begin() + i * grids::kClasses);
    }
    d_fused += nn::dense_backward(flat, dz, heads_[g].params, backend_);
  }

  // Fusion: F = S * gamma * G.
  Tensor d_sal({n, 1, k, k});
  std::vector<SpatialMap> d_cone(n, SpatialMap(k));
  Tensor d_gamma_total = d_gamma;
  for (std::size_t i = 0; i < n; ++i) {
    const double gamma = res.gamma[i];
    for (std::size_t c = 0; c < kk; ++c) {
      const double df = d_fused[i * kk + c];
      const double s = res.saliency[i * kk + c], g = res.cone_map[i * kk + c];
      d_sal[i * kk + c] = df * gamma * g;
      d_cone[i].values()[c] = df * gamma * s;
      d_gamma_total[i] += df * s * g;
    }
  }
  saliency_.backward(trace.saliency, d_sal);

  // Geometry.
  const std::size_t n_theta = theta_count();
  std::vector<geometry::GeometryGrads> gg(n);
  geometry::IntersectOptions opts{cfg_.kappa, cfg_.kappa_h, true, true};
  const bool par = backend_ == nn::Backend::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    gg[i] = geometry::intersect_map_backward(res.geometry[i], k, opts, d_cone[i]);
  }
  Tensor d_cone_raw({n, 5});
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) d_cone_raw.at(i, a) = gg[i].direction_raw(a);
    d_cone_raw.at(i, 3) = gg[i].aperture_raw;
    d_cone_raw.at(i, 4) = gg[i].radius_raw;
  }
  cone_.backward(trace.cone, d_cone_raw);

  if (uses_transform_net()) {
    Tensor d_t({n, n_theta + 1});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n_theta; ++j) d_t.at(i, j) = gg[i].theta[j];
      if (cfg_.extension) {
        const double gamma = res.gamma[i];
        d_t.at(i, n_theta) = d_gamma_total[i] * gamma * (1.0 - gamma);
      }
    }
    const Tensor d_cat = t2_.backward(trace.t2, d_t);
    auto [d_fs, d_ft] = split_channels(d_cat, cfg_.transform_channels);
    t1_.backward(trace.t1_source, d_fs);
    t1_.backward(trace.t1_target, d_ft);
  }
}

std::vector<GazePrediction> GazeModel::predict(const Batch& batch) const {
  const ForwardResult res = forward(batch);
  const std::size_t n = batch.size();
  const std::size_t per = grids::kGridCount * grids::kClasses;
  std::vector<GazePrediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto d = grids::combine(res.logits.data().subspan(i * per, per), !cfg_.extension);
    out[i].point = grids::mode(d.canvas);
    out[i].density = std::move(d.canvas);
    out[i].no_gaze = d.no_gaze;
    out[i].gamma = res.gamma[i];
  }
  return out;
}

GazePrediction GazeModel::predict(const Sample& sample) const {
  return predict(make_batch(std::span<const Sample>(&sample, 1)))[0];
}

std::vector<std::pair<std::string, nn::LayerParams*>> GazeModel::named_parameters() {
  std::vector<std::pair<std::string, nn::LayerParams*>> out;
  const auto add = [&out](const std::string& prefix, nn::Sequential& seq) {
    std::size_t i = 0;
    for (auto* p : seq.parameters()) out.emplace_back(prefix + "." + std::to_string(i++), p);
  };
  add("saliency", saliency_);
  add("cone", cone_);
  add("transform.shared", t1_);
  add("transform.head", t2_);
  for (std::size_t g = 0; g < heads_.size(); ++g) out.emplace_back("grids." + std::to_string(g), &heads_[g].params);
  return out;
}

std::vector<std::pair<std::string, const nn::LayerParams*>> GazeModel::named_parameters() const {
  std::vector<std::pair<std::string, const nn::LayerParams*>> out;
  for (auto& [name, p] : const_cast<GazeModel*>(this)->named_parameters()) out.emplace_back(name, p);
  return out;
}

std::vector<nn::LayerParams*> GazeModel::parameters() {
  std::vector<nn::LayerParams*> out;
  for (auto& [name, p] : named_parameters()) out.push_back(p);
  return out;
}

void GazeModel::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::size_t GazeModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& [name, p] : named_parameters()) total += p->weight.size() + p->bias.size();
  return total;
}

SpatialMap GazeModel::saliency_pathway(const Tensor& target) const {
  const Tensor s = saliency_.forward(target.reshaped({1, target.dim(0), target.dim(1), target.dim(2)}));
  return SpatialMap(cfg_.k, s.values());
}

geometry::Cone GazeModel::cone_pathway(const Tensor& head, const Vec2& eye) const {
  Tensor in({1, head.size() + 2});
  std::copy(head.data().begin(), head.data().end(), in.data().begin());
  in[head.size()] = to_view(eye.x());
  in[head.size() + 1] = to_view(eye.y());
  const Tensor raw = cone_.forward(in);
  return geometry::make_cone(Vec2(to_view(eye.x()), to_view(eye.y())), Vec3(raw[0], raw[1], raw[2]), raw[3], raw[4]);
}

std::pair<geometry::AffineT, double> GazeModel::transform_pathway(const Tensor& source, const Tensor& target) const {
  if (source.shape() != target.shape()) {
    throw DimensionError("transform pathway: views differ in size, " + shape_str(source.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  if (!uses_transform_net()) return {geometry::params_to_affine(cfg_.family, {}), 1.0};
  const Shape one{1, source.dim(0), source.dim(1), source.dim(2)};
  const Tensor fs = t1_.forward(source.reshaped(one));
  const Tensor ft = t1_.forward(target.reshaped(one));
  const Tensor out = t2_.forward(concat_channels(fs, ft));
  const std::size_t n_theta = theta_count();
  std::vector<double> theta(out.data().begin(), out.data().begin() + n_theta);
  const double gamma = cfg_.extension ? nn::sigmoid(out[n_theta]) : 1.0;
  return {geometry::params_to_affine(cfg_.family, theta), gamma};
}

SpatialMap fuse(const SpatialMap& s, const SpatialMap& g, double gamma) {
  if (s.side() != g.side()) {
    throw DimensionError("fuse: map sides differ (" + std::to_string(s.side()) + " vs " + std::to_string(g.side()) + ")");
  }
  SpatialMap out(s.side());
  for (std::size_t c = 0; c < s.values().size(); ++c) out.values()[c] = s.values()[c] * (gamma * g.values()[c]);
  return out;
}

}  // namespace gazecone::model

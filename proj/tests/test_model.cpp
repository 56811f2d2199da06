#include <gtest/gtest.h>

#include <cmath>

#include "gazecone/errors.hpp"
#include "gazecone/grids.hpp"
#include "gazecone/model.hpp"
#include "gazecone/train.hpp"
#include "test_util.hpp"

using namespace gazecone;
using namespace gazecone::model;
using geometry::SpatialMap;
using geometry::Vec2;
using testutil::random_tensor;

namespace {

ModelConfig tiny_config(bool extension = false, TransformFamily fam = TransformFamily::vertical_rot_trans) {
  ModelConfig c;
  c.image_side = 8;
  c.head_crop = 4;
  c.k = 5;
  c.saliency_channels = 2;
  c.transform_channels = 2;
  c.transform_merge_channels = 2;
  c.cone_hidden1 = 6;
  c.cone_hidden2 = 4;
  c.transform_hidden1 = 6;
  c.transform_hidden2 = 4;
  c.family = fam;
  c.extension = extension;
  c.seed = 3;
  return c;
}

Sample random_sample(const ModelConfig& c, Rng& rng) {
  Sample s;
  s.source = random_tensor({c.channels, c.image_side, c.image_side}, rng, 0.0, 1.0);
  s.target = random_tensor({c.channels, c.image_side, c.image_side}, rng, 0.0, 1.0);
  s.head = random_tensor({c.channels, c.head_crop, c.head_crop}, rng, 0.0, 1.0);
  s.eye = Vec2(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
  s.gaze = Vec2(rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0));
  return s;
}

std::vector<double> one_hot_logits(std::size_t cls) {
  std::vector<double> l(grids::kGridCount * grids::kClasses, -1e3);
  for (std::size_t g = 0; g < grids::kGridCount; ++g) l[g * grids::kClasses + cls] = 1e3;
  return l;
}

}  // namespace

TEST(Grids, OneHotCentreCellPeaksAtCanvasCentre) {
  const auto d = grids::combine(one_hot_logits(12), true);
  const auto v = d.canvas.values();
  const auto best = std::max_element(v.begin(), v.end()) - v.begin();
  EXPECT_EQ(best, 7 * 15 + 7);
  EXPECT_EQ(grids::mode(d.canvas), Vec2(0.5, 0.5));
}

TEST(Grids, UniformLogits) {
  const std::vector<double> l(grids::kGridCount * grids::kClasses, 0.0);
  const auto d = grids::combine(l, false);
  EXPECT_NEAR(d.no_gaze, 1.0 / 26.0, 1e-12);
  const double interior = d.canvas.at(7, 7);
  for (std::size_t i = 1; i < 14; ++i)
    for (std::size_t j = 1; j < 14; ++j) EXPECT_NEAR(d.canvas.at(i, j), interior, 1e-9);
  double sum = d.no_gaze;
  for (double x : d.canvas.values()) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Grids, DensityIsDistribution) {
  Rng rng(31);
  for (int n = 0; n < 50; ++n) {
    std::vector<double> l(grids::kGridCount * grids::kClasses);
    for (auto& x : l) x = rng.uniform(-8, 8);
    for (bool mask : {false, true}) {
      const auto d = grids::combine(l, mask);
      double sum = d.no_gaze;
      for (double x : d.canvas.values()) {
        EXPECT_GE(x, 0.0);
        sum += x;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      if (mask) {
        EXPECT_EQ(d.no_gaze, 0.0);
      }
    }
  }
}

TEST(Grids, TargetClassOfCentre) { EXPECT_EQ(grids::target_class(Vec2(0.5, 0.5), 0), 12u); }

TEST(Grids, MirroredGridIsInvolution) {
  for (std::size_t g = 0; g < grids::kGridCount; ++g) {
    const auto h = grids::mirrored_grid(g);
    EXPECT_EQ(grids::mirrored_grid(h), g);
    EXPECT_EQ(grids::kGridShift[h].cols, -grids::kGridShift[g].cols);
    EXPECT_EQ(grids::kGridShift[h].rows, grids::kGridShift[g].rows);
  }
}

TEST(Mode, Examples) {
  SpatialMap a(15);
  a.at(0, 0) = 1.0;
  EXPECT_NEAR(grids::mode(a).x(), 1.0 / 30.0, 1e-15);
  EXPECT_NEAR(grids::mode(a).y(), 1.0 / 30.0, 1e-15);
  SpatialMap b(15);
  b.at(7, 7) = 1.0;
  EXPECT_EQ(grids::mode(b), Vec2(0.5, 0.5));
  const Vec2 u = grids::mode(SpatialMap(15, 1.0 / 225.0));
  EXPECT_NEAR(u.x(), 1.0 / 30.0, 1e-15);
  EXPECT_NEAR(u.y(), 1.0 / 30.0, 1e-15);
  SpatialMap c(15);
  c.at(2, 9) = 1.0;  // row 2, column 9
  EXPECT_NEAR(grids::mode(c).x(), 19.0 / 30.0, 1e-15);
  EXPECT_NEAR(grids::mode(c).y(), 5.0 / 30.0, 1e-15);
}

TEST(Fuse, Examples) {
  Rng rng(32);
  SpatialMap s(5), g(5);
  for (auto& v : s.values()) v = rng.uniform();
  for (auto& v : g.values()) v = rng.uniform();
  const SpatialMap zero = fuse(s, g, 0.0);
  for (double v : zero.values()) EXPECT_EQ(v, 0.0);
  const SpatialMap f = fuse(SpatialMap(5, 1.0), g, 0.7);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_DOUBLE_EQ(f.values()[i], 0.7 * g.values()[i]);
  EXPECT_EQ(fuse(s, g, 1.0), fuse(g, s, 1.0));
}

TEST(Model, SaliencyRangeAndDeterminism) {
  const GazeModel m(tiny_config());
  Rng rng(33);
  for (int n = 0; n < 5; ++n) {
    const Tensor img = random_tensor({3, 8, 8}, rng, 0.0, 1.0);
    const SpatialMap s = m.saliency_pathway(img);
    ASSERT_EQ(s.side(), 5u);
    for (double v : s.values()) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    EXPECT_EQ(s, m.saliency_pathway(img));
  }
}

TEST(Model, ConeIsValid) {
  const GazeModel m(tiny_config());
  Rng rng(34);
  for (int n = 0; n < 10; ++n) {
    const Tensor head = random_tensor({3, 4, 4}, rng, -3.0, 3.0);
    const Vec2 eye(rng.uniform(), rng.uniform());
    const auto c = m.cone_pathway(head, eye);
    EXPECT_NEAR(c.direction.norm(), 1.0, 1e-12);
    EXPECT_GT(c.aperture, 0.0);
    EXPECT_LT(c.aperture, 1.0);
    EXPECT_GE(c.head_radius, 0.0);
    const auto c2 = m.cone_pathway(head, eye);
    EXPECT_EQ(c.direction, c2.direction);
    EXPECT_EQ(c.aperture, c2.aperture);
  }
}

TEST(Model, SharedTransformFeatures) {
  const GazeModel m(tiny_config(true));
  Rng rng(35);
  Sample s = random_sample(m.config(), rng);
  s.target = s.source;
  ForwardTrace trace;
  m.forward(make_batch(std::span<const Sample>(&s, 1)), &trace);
  EXPECT_EQ(trace.t1_source.output, trace.t1_target.output);
  const auto [t_ab, g_ab] = m.transform_pathway(s.source, s.target);
  const auto [t_ba, g_ba] = m.transform_pathway(s.target, s.source);
  EXPECT_EQ(t_ab.theta, t_ba.theta);
  EXPECT_EQ(g_ab, g_ba);
}

TEST(Model, BaseModelGammaIsOne) {
  const GazeModel m(tiny_config(false));
  Rng rng(36);
  std::vector<Sample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_sample(m.config(), rng));
  const auto res = m.forward(make_batch(batch));
  for (double g : res.gamma.data()) EXPECT_EQ(g, 1.0);
  for (const auto& p : m.predict(make_batch(batch))) {
    EXPECT_EQ(p.gamma, 1.0);
    EXPECT_EQ(p.no_gaze, 0.0);
  }
}

TEST(Model, PredictionIsDistributionAndDeterministic) {
  Rng rng(37);
  for (bool ext : {false, true}) {
    const GazeModel m(tiny_config(ext));
    std::vector<Sample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_sample(m.config(), rng));
    const auto p1 = m.predict(make_batch(batch));
    const auto p2 = m.predict(make_batch(batch));
    for (std::size_t i = 0; i < p1.size(); ++i) {
      double sum = p1[i].no_gaze;
      for (double v : p1[i].density.values()) {
        EXPECT_GE(v, 0.0);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
      EXPECT_EQ(p1[i].density, p2[i].density);
      EXPECT_EQ(p1[i].point, p2[i].point);
      EXPECT_EQ(p1[i].point, grids::mode(p1[i].density));
    }
  }
}

TEST(Model, BackendsAgree) {
  GazeModel a(tiny_config(true));
  GazeModel b(tiny_config(true));
  a.set_backend(nn::Backend::serial);
  b.set_backend(nn::Backend::parallel);
  Rng rng(38);
  std::vector<Sample> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(random_sample(a.config(), rng));
  const auto ra = a.forward(make_batch(batch));
  const auto rb = b.forward(make_batch(batch));
  EXPECT_LE(max_abs_diff(ra.logits, rb.logits), 1e-10);
}

TEST(Model, InvalidConfigThrows) {
  ModelConfig c = tiny_config();
  c.image_side = 12;
  EXPECT_THROW(GazeModel{c}, ConfigError);
  c = tiny_config();
  c.kappa = 0.0;
  EXPECT_THROW(GazeModel{c}, ConfigError);
}

TEST(Model, MirroredSample) {
  Rng rng(39);
  const Sample s = random_sample(tiny_config(), rng);
  const Sample m = mirrored(s);
  EXPECT_DOUBLE_EQ(m.eye.x(), 1.0 - s.eye.x());
  EXPECT_DOUBLE_EQ(m.gaze->x(), 1.0 - s.gaze->x());
  EXPECT_EQ(m.source[1 * 64 + 2 * 8 + 0], s.source[1 * 64 + 2 * 8 + 7]);  // [c, h, w]
  const Sample back = mirrored(m);
  EXPECT_EQ(back.source, s.source);
  EXPECT_EQ(back.eye, s.eye);
}

// Finite differences of the per-sample training objective against the
// gradients accumulated by backward, for every parameter tensor of a tiny model.
TEST(Model, EndToEndGradientMatchesFiniteDifferences) {
  for (bool ext : {false, true}) {
    GazeModel m(tiny_config(ext));
    Rng rng(40 + ext);
    std::vector<Sample> one{random_sample(m.config(), rng)};
    one[0].same_scene = false;
    learning::TrainConfig cfg;
    cfg.extension = ext;
    cfg.flip = false;
    const std::size_t idx[] = {0};
    const bool flip[] = {false};
    m.zero_grad();
    learning::accumulate_batch(m, one, idx, flip, cfg);
    auto f = [&] { return learning::total_loss(one[0], m, cfg); };
    std::size_t checked = 0;
    for (auto& [name, p] : m.named_parameters()) {
      for (auto [val, grad] : {std::pair{&p->weight, &p->weight_grad}, std::pair{&p->bias, &p->bias_grad}}) {
        const std::size_t n = val->size();
        for (std::size_t s = 0; s < std::min<std::size_t>(n, 6); ++s) {
          const std::size_t i = static_cast<std::size_t>(rng.below(n));
          const double a = (*grad)[i];
          double e = 1.0;
          // A stencil that crosses a relu or max-pool switch is re-measured with a smaller step.
          for (double h : {1e-4, 1e-6}) {
            e = std::min(e, testutil::rel_err(a, testutil::central_diff(f, (*val)[i], h)));
            if (e < 1e-3) break;
          }
          EXPECT_LT(e, 1e-3) << name << " index " << i << " extension " << ext;
          ++checked;
        }
      }
    }
    EXPECT_GT(checked, 20u);
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>
#include <set>
#include <sstream>

#include "gazecone/errors.hpp"
#include "gazecone/eval.hpp"
#include "gazecone/random.hpp"
#include "gazecone/synth.hpp"

using namespace gazecone;
using namespace gazecone::eval;

namespace {

// Pairwise definition: P(score_pos > score_neg) + P(tie)/2 over all negatives.
double auc_pairwise(const SpatialMap& m, std::size_t pi, std::size_t pj) {
  const double p = m.at(pi, pj);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.side(); ++i)
    for (std::size_t j = 0; j < m.side(); ++j) {
      if (i == pi && j == pj) continue;
      acc += m.at(i, j) < p ? 1.0 : (m.at(i, j) == p ? 0.5 : 0.0);
      ++n;
    }
  return acc / static_cast<double>(n);
}

// Sum over distinct thresholds t (descending) of (R(t) - R(t_prev)) * P(t).
double ap_by_thresholds(const std::vector<double>& s, const std::vector<bool>& y) {
  std::set<double, std::greater<>> thr(s.begin(), s.end());
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), true));
  double ap = 0.0, prev = 0.0;
  for (double t : thr) {
    double tp = 0, sel = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) {
        ++sel;
        tp += y[i];
      }
    ap += (tp / pos - prev) * (tp / sel);
    prev = tp / pos;
  }
  return ap;
}

double ap(const std::vector<double>& s, const std::vector<bool>& y) {
  std::unique_ptr<bool[]> b(new bool[y.size()]);
  std::copy(y.begin(), y.end(), b.get());
  return average_precision(s, std::span<const bool>(b.get(), y.size()));
}

}  // namespace

TEST(Auc, Examples) {
  SpatialMap onehot(15);
  onehot.at(7, 7) = 1.0;
  EXPECT_DOUBLE_EQ(auc(onehot, Vec2(0.5, 0.5)), 1.0);
  EXPECT_DOUBLE_EQ(auc(SpatialMap(15, 1.0 / 225), Vec2(0.5, 0.5)), 0.5);
  // Positive tied with 223 negatives and below one.
  EXPECT_DOUBLE_EQ(auc(onehot, Vec2(0.01, 0.01)), 223.0 * 0.5 / 224.0);
  EXPECT_THROW(auc(onehot, Vec2(1.2, 0.5)), InputError);
}

TEST(Auc, MatchesPairwiseDefinition) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    SpatialMap m(15);
    // Coarse values force many ties.
    for (double& v : m.values()) v = std::floor(rng.uniform() * 6.0);
    const Vec2 y(rng.uniform(), rng.uniform());
    const auto i = static_cast<std::size_t>(y.y() * 15), j = static_cast<std::size_t>(y.x() * 15);
    EXPECT_NEAR(auc(m, y), auc_pairwise(m, i, j), 1e-15);
  }
}

TEST(Auc, RowIsVerticalCoordinate) {
  SpatialMap m(15);
  m.at(2, 12) = 1.0;  // row 2, column 12
  EXPECT_DOUBLE_EQ(auc(m, Vec2(12.5 / 15, 2.5 / 15)), 1.0);
  EXPECT_LT(auc(m, Vec2(2.5 / 15, 12.5 / 15)), 0.5);
}

TEST(L2, Examples) {
  EXPECT_DOUBLE_EQ(l2(Vec2(0, 0), Vec2(0.3, 0.4)), 0.5);
  EXPECT_DOUBLE_EQ(l2(Vec2(0.2, 0.2), Vec2(0.2, 0.2)), 0.0);
  EXPECT_DOUBLE_EQ(l2(Vec2(0, 0), Vec2(1, 1)), std::sqrt(2.0));
}

TEST(AveragePrecision, Examples) {
  EXPECT_DOUBLE_EQ(ap({0.9, 0.8, 0.2, 0.1}, {true, true, false, false}), 1.0);
  // Reversed ranking: positives found at ranks 3 and 4.
  EXPECT_DOUBLE_EQ(ap({0.1, 0.2, 0.8, 0.9}, {true, true, false, false}), 0.5 * (1.0 / 3.0) + 0.5 * 0.5);
  // All tied: one threshold, precision = prevalence.
  EXPECT_DOUBLE_EQ(ap({0.5, 0.5, 0.5, 0.5, 0.5}, {true, false, false, true, false}), 0.4);
  EXPECT_THROW(ap({0.1, 0.2}, {true, true}), UndefinedMetricError);
  EXPECT_THROW(ap({0.1, 0.2}, {false, false}), UndefinedMetricError);
}

TEST(AveragePrecision, MatchesThresholdEnumeration) {
  Rng rng(9);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(11);
    std::vector<double> s(n);
    std::vector<bool> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform() * 4.0) / 4.0;
      y[i] = rng.uniform() < 0.5;
    }
    y[0] = true;
    y[1] = false;
    EXPECT_NEAR(ap(s, y), ap_by_thresholds(s, y), 1e-14);
  }
}

TEST(GaussianDensity, NormalisedAndPeaked) {
  const SpatialMap g = gaussian_density(Vec2(0.5, 0.5));
  double sum = 0.0;
  for (double v : g.values()) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  const auto v = g.values();
  EXPECT_EQ(std::max_element(v.begin(), v.end()) - v.begin(), 7 * 15 + 7);
}

TEST(Baselines, Center) {
  const auto data = synth::generate(1, synth::GenConfig{}, 5);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = Baseline::center().predict(data[i], i);
    EXPECT_EQ(p.point, Vec2(0.5, 0.5));
    EXPECT_EQ(p.density, gaussian_density(Vec2(0.5, 0.5)));
  }
}

TEST(Baselines, RandomIsReproducibleAndInRange) {
  const auto data = synth::generate(1, synth::GenConfig{}, 50);
  const auto a = predict_all(Baseline::random(3), data), b = predict_all(Baseline::random(3), data);
  const auto c = predict_all(Baseline::random(4), data);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(a[i].point, b[i].point);
    differ += a[i].point != c[i].point;
    EXPECT_GE(a[i].point.minCoeff(), 0.0);
    EXPECT_LT(a[i].point.maxCoeff(), 1.0);
  }
  EXPECT_EQ(differ, data.size());
}

TEST(Baselines, FixedBias) {
  EXPECT_THROW(Baseline::fixed_bias().predict(Sample{}, 0), StateError);
  // Every training gaze is the same point: the fit returns it for any head.
  std::vector<Sample> train(4);
  for (std::size_t i = 0; i < train.size(); ++i) {
    train[i].eye = Vec2(0.1 + 0.2 * i, 0.5);
    train[i].gaze = Vec2(0.3, 0.7);
  }
  auto b = Baseline::fixed_bias();
  b.fit(train);
  Sample q;
  q.eye = Vec2(0.95, 0.05);
  EXPECT_TRUE(b.predict(q, 0).point.isApprox(Vec2(0.3, 0.7), 1e-15));
  // Per-cell means.
  train[0].gaze = Vec2(0.9, 0.1);
  b.fit(train);
  EXPECT_EQ(b.predict(train[0], 0).point, Vec2(0.9, 0.1));
  EXPECT_EQ(b.predict(train[1], 0).point, Vec2(0.3, 0.7));
  std::vector<Sample> none(2);
  EXPECT_THROW(Baseline::fixed_bias().fit(none), InputError);
}

TEST(RunEval, DeterministicAndInRange) {
  synth::GenConfig cfg;
  cfg.extension = true;
  const auto data = synth::generate(2, cfg, 300);
  std::vector<PredictionSet> sets = {{"center", predict_all(Baseline::center(), data), false},
                                     {"random", predict_all(Baseline::random(1), data), true}};
  const EvalReport a = run_eval(sets, data), b = run_eval(sets, data);
  std::ostringstream sa, sb;
  a.write_csv(sa);
  b.write_csv(sb);
  EXPECT_EQ(sa.str(), sb.str());

  for (const auto& r : a.rows) {
    EXPECT_GT(r.all.auc, 0.0);
    EXPECT_LT(r.all.auc, 1.0);
    EXPECT_GE(r.all.l2, 0.0);
    EXPECT_LE(r.all.l2, std::sqrt(2.0));
    EXPECT_EQ(r.all.count + r.excluded, data.size());
  }
  EXPECT_TRUE(std::isnan(a.row("center").ap));
  EXPECT_GE(a.row("random").ap, 0.0);
  EXPECT_LE(a.row("random").ap, 1.0);

  // Bins partition the labelled samples.
  std::size_t binned = 0;
  for (double d : {0.0, 15.0, 30.0, 45.0}) binned += a.bin("center", d).count;
  EXPECT_EQ(binned, a.row("center").all.count);
  std::size_t subset = 0;
  for (const auto& s : data) subset += s.gaze && std::abs(s.camera_angle) * 180.0 / std::numbers::pi >= 30.0;
  EXPECT_EQ(a.row("center").subset.count, subset);
}

TEST(RunEval, RejectsBadInput) {
  const auto data = synth::generate(2, synth::GenConfig{}, 5);
  std::vector<PredictionSet> short_set = {{"x", predict_all(Baseline::center(), std::span(data).first(3)), false}};
  EXPECT_THROW(run_eval(short_set, data), InputError);
  EXPECT_THROW(run_eval({}, std::span<const Sample>{}), InputError);
}

TEST(RunEval, PerfectPredictionScoresOne) {
  const auto data = synth::generate(3, synth::GenConfig{}, 100);
  PredictionSet oracle{"oracle", {}, false};
  for (const auto& s : data) {
    GazePrediction p;
    p.density = SpatialMap(15);
    if (s.gaze) {
      p.point = *s.gaze;
      const auto cell = [](double u) { return std::min<std::size_t>(14, static_cast<std::size_t>(u * 15)); };
      p.density.at(cell(s.gaze->y()), cell(s.gaze->x())) = 1.0;
    }
    oracle.predictions.push_back(p);
  }
  const auto r = run_eval(std::vector{oracle}, data).row("oracle");
  EXPECT_DOUBLE_EQ(r.all.auc, 1.0);
  EXPECT_DOUBLE_EQ(r.all.l2, 0.0);
}

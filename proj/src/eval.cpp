#include "gazecone/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "gazecone/errors.hpp"
#include "gazecone/grids.hpp"
#include "gazecone/random.hpp"

namespace gazecone::eval {

double auc(const SpatialMap& density, const Vec2& y) {
  const std::size_t side = density.side();
  if (side == 0) throw DimensionError("auc: empty density");
  if (!(y.x() >= 0.0 && y.x() <= 1.0 && y.y() >= 0.0 && y.y() <= 1.0)) {
    throw InputError("auc: target outside [0,1]^2");
  }
  const auto cell = [side](double u) {
    return std::min(side - 1, static_cast<std::size_t>(std::max(0.0, u * static_cast<double>(side))));
  };
  const double pos = density.at(cell(y.y()), cell(y.x()));
  const auto v = density.values();
  double below = 0.0, ties = 0.0;
  for (double s : v) {
    if (s < pos) below += 1.0;
    else if (s == pos) ties += 1.0;
  }
  ties -= 1.0;  // the positive itself
  return (below + 0.5 * ties) / static_cast<double>(v.size() - 1);
}

double l2(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

double average_precision(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: scores and labels differ in length");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0 || positives == labels.size()) {
    throw UndefinedMetricError("average_precision needs at least one positive and one negative");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i, ++seen) tp += labels[order[i]] ? 1 : 0;
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    ap += (recall - prev_recall) * static_cast<double>(tp) / static_cast<double>(seen);
    prev_recall = recall;
  }
  return ap;
}

SpatialMap gaussian_density(const Vec2& center, double sigma) {
  const std::size_t n = grids::kCanvasSide;
  SpatialMap out(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 c((2.0 * static_cast<double>(j) + 1.0) / (2.0 * n), (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
      out.at(i, j) = std::exp(-(c - center).squaredNorm() / (2.0 * sigma * sigma));
      total += out.at(i, j);
    }
  }
  for (double& v : out.values()) v /= total;
  return out;
}

std::string to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::center: return "center";
    case BaselineKind::random: return "random";
    case BaselineKind::fixed_bias: return "fixed_bias";
  }
  return "?";
}

Baseline Baseline::center() { return Baseline(BaselineKind::center); }
Baseline Baseline::random(std::uint64_t seed) { return Baseline(BaselineKind::random, seed); }
Baseline Baseline::fixed_bias() { return Baseline(BaselineKind::fixed_bias); }

namespace {

std::size_t bias_cell(const Vec2& eye) {
  const auto q = [](double u) {
    return std::min(Baseline::kBiasGrid - 1,
                    static_cast<std::size_t>(std::max(0.0, u * static_cast<double>(Baseline::kBiasGrid))));
  };
  return q(eye.y()) * Baseline::kBiasGrid + q(eye.x());
}

}  // namespace

void Baseline::fit(std::span<const Sample> train) {
  if (kind_ != BaselineKind::fixed_bias) return;
  const std::size_t cells = kBiasGrid * kBiasGrid;
  std::vector<Vec2> sum(cells, Vec2::Zero());
  std::vector<std::size_t> count(cells, 0);
  Vec2 total = Vec2::Zero();
  std::size_t n = 0;
  for (const auto& s : train) {
    if (!s.gaze) continue;
    const std::size_t c = bias_cell(s.eye);
    sum[c] += *s.gaze;
    ++count[c];
    total += *s.gaze;
    ++n;
  }
  if (n == 0) throw InputError("fixed_bias: training set has no gaze labels");
  const Vec2 mean = total / static_cast<double>(n);
  table_.assign(cells, mean);
  for (std::size_t c = 0; c < cells; ++c) {
    if (count[c] > 0) table_[c] = sum[c] / static_cast<double>(count[c]);
  }
}

GazePrediction Baseline::predict(const Sample& sample, std::size_t index) const {
  GazePrediction p;
  switch (kind_) {
    case BaselineKind::center:
      p.point = Vec2(0.5, 0.5);
      break;
    case BaselineKind::random: {
      Rng rng(stream_seed(seed_, index));
      const double x = rng.uniform();
      p.point = Vec2(x, rng.uniform());
      break;
    }
    case BaselineKind::fixed_bias:
      if (!fitted()) throw StateError("fixed_bias baseline used before fit()");
      p.point = table_[bias_cell(sample.eye)];
      break;
  }
  p.density = gaussian_density(p.point);
  return p;
}

std::vector<GazePrediction> predict_all(const model::GazeModel& m, std::span<const Sample> data, std::size_t batch) {
  std::vector<GazePrediction> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch); ++i) idx.push_back(i);
    auto preds = m.predict(model::make_batch(data, idx));
    for (auto& p : preds) out.push_back(std::move(p));
  }
  return out;
}

std::vector<GazePrediction> predict_all(const Baseline& b, std::span<const Sample> data) {
  std::vector<GazePrediction> out(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.size()); ++i) out[i] = b.predict(data[i], i);
  return out;
}

Scores score(std::span<const GazePrediction> preds, std::span<const Sample> data, const std::vector<bool>& keep) {
  Scores s;
  double a = 0.0, d = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!keep[i] || !data[i].gaze) continue;
    a += auc(preds[i].density, *data[i].gaze);
    d += l2(preds[i].point, *data[i].gaze);
    ++s.count;
  }
  if (s.count > 0) {
    s.auc = a / static_cast<double>(s.count);
    s.l2 = d / static_cast<double>(s.count);
  }
  return s;
}

EvalReport run_eval(std::span<const PredictionSet> sets, std::span<const Sample> data, const EvalOptions& opts) {
  if (data.empty()) throw InputError("run_eval: empty evaluation set");
  if (!(opts.bin_deg > 0.0) || !(opts.max_deg > 0.0)) throw ConfigError("run_eval: bin and range must be positive");
  EvalReport report;
  report.options = opts;
  const auto deg = [](const Sample& s) { return std::abs(s.camera_angle) * 180.0 / std::numbers::pi; };
  const std::vector<bool> all(data.size(), true);
  std::vector<bool> subset(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) subset[i] = deg(data[i]) >= opts.subset_deg;
  const auto bins = static_cast<std::size_t>(std::ceil(opts.max_deg / opts.bin_deg - 1e-9));

  for (const auto& set : sets) {
    if (set.predictions.size() != data.size()) {
      throw InputError("run_eval: " + set.name + " has " + std::to_string(set.predictions.size()) +
                       " predictions for " + std::to_string(data.size()) + " samples");
    }
    EvalRow row;
    row.name = set.name;
    row.all = score(set.predictions, data, all);
    row.subset = score(set.predictions, data, subset);
    row.excluded = static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](const Sample& s) { return !s.gaze; }));
    if (set.scene_scores) {
      std::vector<double> gamma(data.size());
      std::unique_ptr<bool[]> same(new bool[data.size()]);
      for (std::size_t i = 0; i < data.size(); ++i) {
        gamma[i] = set.predictions[i].gamma;
        same[i] = data[i].same_scene;
      }
      try {
        row.ap = average_precision(gamma, std::span<const bool>(same.get(), data.size()));
      } catch (const UndefinedMetricError&) {
        row.ap = kNaN;
      }
    }
    report.rows.push_back(row);

    for (std::size_t b = 0; b < bins; ++b) {
      SweepRow sw;
      sw.name = set.name;
      sw.lo_deg = opts.bin_deg * static_cast<double>(b);
      sw.hi_deg = std::min(opts.max_deg, opts.bin_deg * static_cast<double>(b + 1));
      std::vector<bool> keep(data.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double d = deg(data[i]);
        keep[i] = d >= sw.lo_deg && (d < sw.hi_deg || (b + 1 == bins && d <= sw.hi_deg + 1e-9));
      }
      sw.scores = score(set.predictions, data, keep);
      report.sweep.push_back(sw);
    }
  }
  return report;
}

const EvalRow& EvalReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw InputError("no report row named " + name);
}

const Scores& EvalReport::bin(const std::string& name, double deg) const {
  for (const auto& s : sweep) {
    if (s.name == name && deg >= s.lo_deg && deg < s.hi_deg) return s.scores;
  }
  throw InputError("no sweep bin for " + name + " at " + std::to_string(deg) + " deg");
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

}  // namespace

void EvalReport::write_csv(std::ostream& out) const {
  out << "section,name,bin_lo_deg,bin_hi_deg,count,auc,l2,auc_subset,l2_subset,ap,excluded\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << "model," << r.name << ",,," << r.all.count << ',' << r.all.auc << ',' << r.all.l2 << ',' << r.subset.auc
        << ',' << r.subset.l2 << ',' << r.ap << ',' << r.excluded << '\n';
  }
  for (const auto& s : sweep) {
    out << "sweep," << s.name << ',' << s.lo_deg << ',' << s.hi_deg << ',' << s.scores.count << ',' << s.scores.auc
        << ',' << s.scores.l2 << ",,,,\n";
  }
}

void EvalReport::write_table(std::ostream& out) const {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  const std::string sub = ">=" + num(options.subset_deg).substr(0, num(options.subset_deg).find('.'));
  out << std::left << std::setw(static_cast<int>(w)) << "model" << std::right << std::setw(8) << "AUC"
      << std::setw(8) << "L2" << std::setw(10) << ("AUC" + sub) << std::setw(10) << ("L2" + sub) << std::setw(8)
      << "AP" << std::setw(7) << "n" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(static_cast<int>(w)) << r.name << std::right << std::setw(8) << num(r.all.auc)
        << std::setw(8) << num(r.all.l2) << std::setw(10) << num(r.subset.auc) << std::setw(10) << num(r.subset.l2)
        << std::setw(8) << num(r.ap) << std::setw(7) << r.all.count << '\n';
  }
  out << '\n' << std::left << std::setw(static_cast<int>(w)) << "sweep" << std::right << std::setw(12) << "|angle|"
      << std::setw(8) << "AUC" << std::setw(8) << "L2" << std::setw(7) << "n" << '\n';
  for (const auto& s : sweep) {
    std::ostringstream range;
    range << static_cast<int>(s.lo_deg) << '-' << static_cast<int>(s.hi_deg);
    out << std::left << std::setw(static_cast<int>(w)) << s.name << std::right << std::setw(12) << range.str()
        << std::setw(8) << num(s.scores.auc) << std::setw(8) << num(s.scores.l2) << std::setw(7) << s.scores.count
        << '\n';
  }
}

}  // namespace gazecone::eval

#pragma once

// Metrics, baselines and the evaluation report.

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazecone/geometry.hpp"
#include "gazecone/model.hpp"
#include "gazecone/sample.hpp"

namespace gazecone::eval {

using geometry::SpatialMap;
using geometry::Vec2;
using model::GazePrediction;

// ROC area of the density against a single positive cell (the one containing
// y); every other cell is a negative. Tied scores count one half.
double auc(const SpatialMap& density, const Vec2& y);

double l2(const Vec2& a, const Vec2& b);

// Area under the precision-recall curve as a finite sum over recall steps.
// Scores are visited in descending order; equal scores form a single
// threshold, so a block of ties contributes one precision/recall point.
// Throws UndefinedMetricError unless both classes are present.
double average_precision(std::span<const double> scores, std::span<const bool> labels);

// Normalised Gaussian (sigma in image units) on the 15 x 15 canvas.
SpatialMap gaussian_density(const Vec2& center, double sigma = 0.1);

enum class BaselineKind { center, random, fixed_bias };
std::string to_string(BaselineKind kind);

class Baseline {
 public:
  static constexpr std::size_t kBiasGrid = 13;

  static Baseline center();
  static Baseline random(std::uint64_t seed);
  // Unfitted; call fit() before predicting.
  static Baseline fixed_bias();

  // Mean gaze per quantised head cell; empty cells use the global mean.
  void fit(std::span<const Sample> train);
  bool fitted() const { return !table_.empty(); }

  // `index` selects the element of the random stream. Throws StateError for
  // an unfitted fixed_bias baseline.
  GazePrediction predict(const Sample& sample, std::size_t index) const;

  BaselineKind kind() const { return kind_; }
  std::string name() const { return to_string(kind_); }

 private:
  explicit Baseline(BaselineKind kind, std::uint64_t seed = 0) : kind_(kind), seed_(seed) {}
  BaselineKind kind_;
  std::uint64_t seed_ = 0;
  std::vector<Vec2> table_;
};

std::vector<GazePrediction> predict_all(const model::GazeModel& m, std::span<const Sample> data,
                                        std::size_t batch = 64);
std::vector<GazePrediction> predict_all(const Baseline& b, std::span<const Sample> data);

struct PredictionSet {
  std::string name;
  std::vector<GazePrediction> predictions;  // one per sample
  bool scene_scores = false;                // gamma is meaningful
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Scores {
  double auc = kNaN, l2 = kNaN;
  std::size_t count = 0;
};

struct EvalRow {
  std::string name;
  Scores all, subset;
  double ap = kNaN;
  std::size_t excluded = 0;  // NO_GAZE samples left out of AUC and L2
};

struct SweepRow {
  std::string name;
  double lo_deg = 0.0, hi_deg = 0.0;
  Scores scores;
};

struct EvalOptions {
  double subset_deg = 30.0;  // subset: |camera angle| >= this
  double bin_deg = 15.0;
  double max_deg = 60.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<SweepRow> sweep;
  EvalOptions options;

  const EvalRow& row(const std::string& name) const;
  // Scores of `name` in the sweep bin that contains `deg`.
  const Scores& bin(const std::string& name, double deg) const;

  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

// Mean AUC and L2 over gaze-labelled samples for which `keep` holds.
Scores score(std::span<const GazePrediction> preds, std::span<const Sample> data, const std::vector<bool>& keep);

// Throws InputError for an empty dataset or a prediction count mismatch.
EvalReport run_eval(std::span<const PredictionSet> sets, std::span<const Sample> data, const EvalOptions& opts = {});

}  // namespace gazecone::eval

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gazecone/model.hpp"
#include "gazecone/optim.hpp"
#include "gazecone/sample.hpp"

namespace gazecone::learning {

struct TrainConfig {
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double lr = 0.003;
  double momentum = 0.9;
  double geometry_lr_scale = 0.1;  // lr multiplier for the cone and transform pathways
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double lambda_scene = 1.0;
  double kappa = 10.0, kappa_h = 50.0;
  geometry::TransformFamily family = geometry::TransformFamily::vertical_rot_trans;
  std::size_t k = 13;
  std::uint64_t seed = 0;
  bool extension = false;
  bool flip = true;
  std::size_t patience = 10;     // epochs without validation AUC gain before stopping
  double val_fraction = 0.1;     // tail of the training data held out for early stopping

  void validate() const;
  // Model architecture for images of the given size.
  model::ModelConfig model_config(std::size_t image_side = 32, std::size_t head_crop = 8) const;
};

// Per-sample objective: shifted-grid loss (skipped for NO_GAZE samples when the
// extension is off) plus lambda_scene times the scene-change loss (extension only).
double total_loss(const Sample& sample, const model::GazeModel& m, const TrainConfig& cfg);

struct BatchStats {
  double loss = 0.0;  // mean over the batch
  std::size_t size = 0;
};

// Forward and backward over samples[indices] (mirrored where flip is set),
// accumulating the gradient of the mean batch loss. Throws DivergenceError
// naming the first non-finite tensor.
BatchStats accumulate_batch(model::GazeModel& m, std::span<const Sample> samples,
                            std::span<const std::size_t> indices, std::span<const bool> flip,
                            const TrainConfig& cfg);

// Mean total loss over a dataset (no gradient).
double dataset_loss(const model::GazeModel& m, std::span<const Sample> samples, const TrainConfig& cfg);

struct EpochMetrics {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0, auc = 0.0, l2 = 0.0, ap = 0.0;  // NaN when undefined
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // weights of this epoch are kept
  double initial_loss = 0.0;   // mean training loss before the first update
  double final_loss = 0.0;     // mean training loss of the kept weights
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Minibatch training with flip augmentation and early stopping on validation
// AUC. Deterministic for a fixed config and dataset. Throws InputError for an
// empty dataset.
TrainResult train(model::GazeModel& m, std::span<const Sample> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_metrics_csv(std::span<const EpochMetrics> log, std::ostream& out);
void write_metrics_csv(std::span<const EpochMetrics> log, const std::filesystem::path& path);

}  // namespace gazecone::learning

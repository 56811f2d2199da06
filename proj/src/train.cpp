#include "gazecone/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <ostream>

#include "gazecone/errors.hpp"
#include "gazecone/eval.hpp"
#include "gazecone/grids.hpp"
#include "gazecone/losses.hpp"
#include "gazecone/random.hpp"

namespace gazecone::learning {

using geometry::Vec2;

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(geometry_lr_scale >= 0.0) || !std::isfinite(geometry_lr_scale)) {
    throw ConfigError("geometry_lr_scale must be finite and >= 0");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (!(lambda_scene >= 0.0) || !std::isfinite(lambda_scene)) throw ConfigError("lambda_scene must be >= 0");
  if (!(kappa > 0.0) || !(kappa_h > 0.0)) throw ConfigError("temperatures must be positive");
  if (k == 0) throw ConfigError("k must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
}

model::ModelConfig TrainConfig::model_config(std::size_t image_side, std::size_t head_crop) const {
  model::ModelConfig m;
  m.image_side = image_side;
  m.head_crop = head_crop;
  m.k = k;
  m.family = family;
  m.extension = extension;
  m.kappa = kappa;
  m.kappa_h = kappa_h;
  m.seed = seed;
  return m;
}

namespace {

constexpr std::size_t kPerSample = grids::kGridCount * grids::kClasses;

std::optional<Vec2> label(const Sample& s, bool flip) {
  if (!s.gaze) return std::nullopt;
  return flip ? Vec2(1.0 - s.gaze->x(), s.gaze->y()) : *s.gaze;
}

// Loss of one sample from its logits and gamma; writes gradients when asked.
double sample_loss(std::span<const double> logits, double gamma, const std::optional<Vec2>& y, bool same_scene,
                   const TrainConfig& cfg, double* d_logits, double* d_gamma) {
  double loss = 0.0;
  if (y || cfg.extension) {
    const auto g = shifted_grids_loss(logits, y, !cfg.extension);
    loss += g.value;
    if (d_logits) std::copy(g.grad.begin(), g.grad.end(), d_logits);
  }
  if (cfg.extension && cfg.lambda_scene > 0.0) {
    const auto s = scene_change_loss(gamma, same_scene);
    loss += cfg.lambda_scene * s.value;
    if (d_gamma) *d_gamma = cfg.lambda_scene * s.grad;
  }
  return loss;
}

std::string first_non_finite(const model::GazeModel& m, const model::ForwardResult& res) {
  const std::pair<const char*, const Tensor*> outputs[] = {{"saliency map", &res.saliency},
                                                           {"cone map", &res.cone_map},
                                                           {"fused map", &res.fused},
                                                           {"gamma", &res.gamma},
                                                           {"logits", &res.logits}};
  for (const auto& [name, t] : outputs) {
    if (!t->all_finite()) return name;
  }
  for (const auto& [name, p] : m.named_parameters()) {
    if (!p->weight.all_finite()) return name + ".weight";
    if (!p->bias.all_finite()) return name + ".bias";
  }
  return "loss";
}

struct SplitAccumulator {
  double loss = 0.0, auc = 0.0, l2 = 0.0;
  std::size_t count = 0, scored = 0;
  std::vector<double> gamma;
  std::vector<char> same;

  void add_predictions(const model::ForwardResult& res, std::span<const Sample> samples,
                       std::span<const std::size_t> idx, std::span<const bool> flip, bool extension) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Sample& s = samples[idx[i]];
      const auto y = label(s, !flip.empty() && flip[i]);
      if (y) {
        const auto d = grids::combine(res.logits.data().subspan(i * kPerSample, kPerSample), !extension);
        auc += eval::auc(d.canvas, *y);
        l2 += eval::l2(grids::mode(d.canvas), *y);
        ++scored;
      }
      if (extension) {
        gamma.push_back(res.gamma[i]);
        same.push_back(s.same_scene);
      }
    }
  }

  EpochMetrics finish(std::size_t epoch, const std::string& split) const {
    EpochMetrics m;
    m.epoch = epoch;
    m.split = split;
    m.loss = count ? loss / static_cast<double>(count) : eval::kNaN;
    m.auc = scored ? auc / static_cast<double>(scored) : eval::kNaN;
    m.l2 = scored ? l2 / static_cast<double>(scored) : eval::kNaN;
    m.ap = eval::kNaN;
    if (!gamma.empty()) {
      std::unique_ptr<bool[]> labels(new bool[same.size()]);
      std::copy(same.begin(), same.end(), labels.get());
      try {
        m.ap = eval::average_precision(gamma, std::span<const bool>(labels.get(), same.size()));
      } catch (const UndefinedMetricError&) {
      }
    }
    return m;
  }
};

EpochMetrics evaluate_split(const model::GazeModel& m, std::span<const Sample> samples, const TrainConfig& cfg,
                            std::size_t epoch, const std::string& split) {
  SplitAccumulator acc;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += 64) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + 64); ++i) idx.push_back(i);
    const auto res = m.forward(model::make_batch(samples, idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Sample& s = samples[idx[i]];
      acc.loss += sample_loss(res.logits.data().subspan(i * kPerSample, kPerSample), res.gamma[i], s.gaze,
                              s.same_scene, cfg, nullptr, nullptr);
    }
    acc.count += idx.size();
    acc.add_predictions(res, samples, idx, {}, cfg.extension);
  }
  return acc.finish(epoch, split);
}

using Snapshot = std::vector<nn::LayerParams>;

Snapshot snapshot(model::GazeModel& m) {
  Snapshot out;
  for (auto* p : m.parameters()) out.push_back(*p);
  return out;
}

void restore(model::GazeModel& m, const Snapshot& snap) {
  auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->weight = snap[i].weight;
    params[i]->bias = snap[i].bias;
  }
}

}  // namespace

double total_loss(const Sample& sample, const model::GazeModel& m, const TrainConfig& cfg) {
  const auto res = m.forward(model::make_batch(std::span<const Sample>(&sample, 1)));
  return sample_loss(res.logits.data(), res.gamma[0], sample.gaze, sample.same_scene, cfg, nullptr, nullptr);
}

namespace {

BatchStats run_batch(model::GazeModel& m, std::span<const Sample> samples, std::span<const std::size_t> indices,
                     std::span<const bool> flip, const TrainConfig& cfg, SplitAccumulator* acc) {
  const std::size_t n = indices.size();
  model::ForwardTrace trace;
  const auto batch = model::make_batch(samples, indices, flip);
  m.forward(batch, &trace);
  const auto& res = trace.result;
  Tensor d_logits(res.logits.shape());
  Tensor d_gamma({n});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = samples[indices[i]];
    loss += sample_loss(res.logits.data().subspan(i * kPerSample, kPerSample), res.gamma[i],
                        label(s, !flip.empty() && flip[i]), s.same_scene, cfg, &d_logits[i * kPerSample],
                        &d_gamma[i]);
  }
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged: first non-finite tensor is " + first_non_finite(m, res));
  }
  const double scale = 1.0 / static_cast<double>(n);
  d_logits *= scale;
  d_gamma *= scale;
  m.backward(trace, d_logits, d_gamma);
  if (acc) {
    acc->loss += loss;
    acc->count += n;
    acc->add_predictions(res, samples, indices, flip, cfg.extension);
  }
  return {loss * scale, n};
}

}  // namespace

BatchStats accumulate_batch(model::GazeModel& m, std::span<const Sample> samples,
                            std::span<const std::size_t> indices, std::span<const bool> flip,
                            const TrainConfig& cfg) {
  if (indices.empty()) throw InputError("accumulate_batch: empty batch");
  return run_batch(m, samples, indices, flip, cfg, nullptr);
}

double dataset_loss(const model::GazeModel& m, std::span<const Sample> samples, const TrainConfig& cfg) {
  if (samples.empty()) throw InputError("dataset_loss: empty dataset");
  return evaluate_split(m, samples, cfg, 0, "").loss;
}

TrainResult train(model::GazeModel& m, std::span<const Sample> data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw InputError("train: empty dataset");
  if (m.config().extension != cfg.extension) throw ConfigError("train: model and config disagree on the extension");

  const auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * static_cast<double>(data.size())));
  const std::size_t n_train = data.size() - n_val;
  const auto train_set = data.first(n_train);
  const auto val_set = data.subspan(n_train);

  nn::OptimizerConfig ocfg;
  ocfg.kind = cfg.optimizer;
  ocfg.lr = cfg.lr;
  ocfg.momentum = cfg.momentum;
  nn::Optimizer opt(ocfg);
  nn::OptimizerConfig gcfg = ocfg;
  gcfg.lr = cfg.lr * cfg.geometry_lr_scale;
  nn::Optimizer geo_opt(gcfg);
  std::vector<nn::LayerParams*> other_params, geo_params;
  for (auto& [name, p] : m.named_parameters()) {
    const bool geo = name.starts_with("cone.") || name.starts_with("transform.");
    (geo ? geo_params : other_params).push_back(p);
  }
  m.zero_grad();

  TrainResult result;
  result.initial_loss = dataset_loss(m, train_set, cfg);
  const auto emit = [&](const EpochMetrics& e) {
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
  };

  std::vector<std::size_t> order(n_train);
  std::vector<bool> flips(n_train);
  double best_auc = -1.0;
  std::size_t since_best = 0;
  Snapshot best;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(stream_seed(cfg.seed, epoch));
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i = 0; i < n_train; ++i) flips[i] = cfg.flip && rng.bernoulli(0.5);

    SplitAccumulator acc;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      std::unique_ptr<bool[]> f(new bool[idx.size()]);
      for (std::size_t i = 0; i < idx.size(); ++i) f[i] = flips[start + i];
      run_batch(m, train_set, idx, std::span<const bool>(f.get(), idx.size()), cfg, &acc);
      opt.step(other_params);
      geo_opt.step(geo_params);
    }
    emit(acc.finish(epoch, "train"));
    result.epochs_run = epoch;

    if (val_set.empty()) {
      result.best_epoch = epoch;
      continue;
    }
    const EpochMetrics val = evaluate_split(m, val_set, cfg, epoch, "val");
    emit(val);
    const double score = std::isnan(val.auc) ? -val.loss : val.auc;
    if (best.empty() || score > best_auc) {
      best_auc = score;
      best = snapshot(m);
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  if (!best.empty()) restore(m, best);
  result.final_loss = dataset_loss(m, train_set, cfg);
  return result;
}

void write_metrics_csv(std::span<const EpochMetrics> log, std::ostream& out) {
  out << "epoch,split,loss,auc,l2,ap\n";
  out.precision(10);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.split << ',' << e.loss << ',' << e.auc << ',' << e.l2 << ',' << e.ap << '\n';
  }
}

void write_metrics_csv(std::span<const EpochMetrics> log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  write_metrics_csv(log, f);
  if (!f) throw IoError("error writing " + path.string());
}

}  // namespace gazecone::learning

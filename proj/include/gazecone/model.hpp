#pragma once

// The gaze-following predictor F(x_s, x_h, u_e, x_t) = head(S(x_t) * gamma * G)
// where G is the soft intersection of the estimated gaze cone with the target
// view plane placed by the estimated affine transform.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gazecone/geometry.hpp"
#include "gazecone/grids.hpp"
#include "gazecone/nn.hpp"
#include "gazecone/sample.hpp"

namespace gazecone::model {

using geometry::TransformFamily;

struct ModelConfig {
  std::size_t image_side = 32;
  std::size_t channels = 3;
  std::size_t head_crop = 8;
  std::size_t k = 13;  // side of the saliency and cone maps
  std::size_t saliency_channels = 4;
  std::size_t transform_channels = 8;
  std::size_t transform_merge_channels = 8;
  std::size_t cone_hidden1 = 32, cone_hidden2 = 16;
  std::size_t transform_hidden1 = 32, transform_hidden2 = 16;
  TransformFamily family = TransformFamily::vertical_rot_trans;
  bool extension = false;  // scene-change confidence gamma and the no-gaze class
  double kappa = 10.0;
  double kappa_h = 50.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Kernel size and padding of the second saliency convolution that maps the
  // pooled (image_side/2) grid onto k x k.
  std::pair<std::size_t, std::size_t> saliency_kernel() const;
};

/// Network inputs for a batch; images are [batch, c, side, side].
struct Batch {
  Tensor source, head, target;
  Tensor eye;  // [batch, 2], image coordinates in [0,1]
  std::size_t size() const { return source.empty() ? 0 : source.dim(0); }
};

// Stacks samples (optionally mirrored left-right) into a batch.
Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices = {},
                 std::span<const bool> flip = {});
// Left-right mirror of a sample: images, eye, gaze label and diagnostics.
Sample mirrored(const Sample& s);

struct ForwardResult {
  Tensor saliency;   // [batch, k, k]
  Tensor cone_map;   // [batch, k, k]
  Tensor fused;      // [batch, k, k]
  Tensor gamma;      // [batch]
  Tensor logits;     // [batch, 5, 26]
  std::vector<geometry::GeometryParams> geometry;  // per sample
};

/// Everything backward needs from a forward pass.
struct ForwardTrace {
  nn::Tape saliency, cone, t1_source, t1_target, t2, head;
  Tensor gamma_logit;  // [batch]
  ForwardResult result;
  bool recorded = false;
};

struct GazePrediction {
  geometry::SpatialMap density;  // 15 x 15
  geometry::Vec2 point;          // mode, image coordinates
  double gamma = 1.0;
  double no_gaze = 0.0;
};

class GazeModel {
 public:
  explicit GazeModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::size_t theta_count() const { return geometry::parameter_count(cfg_.family); }
  bool uses_transform_net() const { return theta_count() > 0 || cfg_.extension; }

  ForwardResult forward(const Batch& batch, ForwardTrace* trace = nullptr) const;

  // d_logits: [batch, 5, 26]; d_gamma: [batch], gradient with respect to gamma
  // itself (added to what flows back from the fused map). Accumulates into the
  // parameter gradients.
  void backward(const ForwardTrace& trace, const Tensor& d_logits, const Tensor& d_gamma);

  std::vector<GazePrediction> predict(const Batch& batch) const;
  GazePrediction predict(const Sample& sample) const;

  // Named parameter tensors in a fixed order (used by checkpoints).
  std::vector<std::pair<std::string, nn::LayerParams*>> named_parameters();
  std::vector<std::pair<std::string, const nn::LayerParams*>> named_parameters() const;
  std::vector<nn::LayerParams*> parameters();
  void zero_grad();
  std::size_t parameter_count() const;

  void set_backend(nn::Backend b);

  // Pathway access for tests and diagnostics.
  const nn::Sequential& saliency_net() const { return saliency_; }
  const nn::Sequential& cone_net() const { return cone_; }
  const nn::Sequential& transform_shared_net() const { return t1_; }
  nn::Sequential& transform_head_net() { return t2_; }

  // Pathway outputs for a single sample.
  geometry::SpatialMap saliency_pathway(const Tensor& target) const;
  geometry::Cone cone_pathway(const Tensor& head, const geometry::Vec2& eye) const;
  std::pair<geometry::AffineT, double> transform_pathway(const Tensor& source, const Tensor& target) const;

 private:
  ModelConfig cfg_;
  nn::Sequential saliency_, cone_, t1_, t2_;
  std::vector<nn::Dense> heads_;
  nn::Backend backend_ = nn::Backend::parallel;
};

// out = s * (gamma * g), element-wise.
geometry::SpatialMap fuse(const geometry::SpatialMap& s, const geometry::SpatialMap& g, double gamma);

}  // namespace gazecone::model

#pragma once

// Layers with explicit forward/backward passes. The free functions are pure;
// `Sequential` chains layers and records what backward needs on a `Tape`.

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "gazecone/kernels.hpp"
#include "gazecone/random.hpp"
#include "gazecone/tensor.hpp"

namespace gazecone::nn {

using kernels::Backend;

/// Weights, bias, and gradient accumulators of identical shapes.
struct LayerParams {
  Tensor weight, bias;
  Tensor weight_grad, bias_grad;

  LayerParams() = default;
  LayerParams(Shape weight_shape, Shape bias_shape);
  LayerParams(Tensor w, Tensor b);

  void zero_grad();
  // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero bias.
  void init_glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out);
};

enum class ActivationKind { relu, sigmoid, softmax, maxpool2x2 };

std::string to_string(ActivationKind kind);

double sigmoid(double t);
double softplus(double t);

// x: [batch, in], weight: [in, out], bias: [out].
Tensor dense_forward(const Tensor& x, const LayerParams& p, Backend backend = Backend::parallel);
// Accumulates parameter gradients into p; returns dL/dx.
Tensor dense_backward(const Tensor& x, const Tensor& dy, LayerParams& p, Backend backend = Backend::parallel);

// x: [batch, c, h, w], weight: [out_c, c, kh, kw], bias: [out_c].
Tensor conv2d_forward(const Tensor& x, const LayerParams& p, std::size_t stride, std::size_t pad,
                      Backend backend = Backend::parallel);
Tensor conv2d_backward(const Tensor& x, const Tensor& dy, LayerParams& p, std::size_t stride, std::size_t pad,
                       Backend backend = Backend::parallel);

// softmax acts on the last axis; maxpool2x2 expects [batch, c, h, w].
Tensor activation_forward(const Tensor& x, ActivationKind kind);
Tensor activation_backward(const Tensor& x, const Tensor& y, const Tensor& dy, ActivationKind kind);

struct Dense {
  LayerParams params;
};
struct Conv2d {
  LayerParams params;
  std::size_t stride = 1, pad = 0;
};
struct Activation {
  ActivationKind kind;
};
// [batch, ...] -> [batch, rest]
struct Flatten {};

using Layer = std::variant<Dense, Conv2d, Activation, Flatten>;

Dense make_dense(std::size_t in, std::size_t out, Rng& rng);
Conv2d make_conv(std::size_t in_c, std::size_t out_c, std::size_t kernel, std::size_t stride, std::size_t pad,
                 Rng& rng);

/// Record of one forward pass through a Sequential.
struct Tape {
  std::vector<Tensor> inputs;  // input of each layer
  Tensor output;
  bool recorded = false;
};

class Sequential {
 public:
  Sequential() = default;

  Sequential& add(Layer layer);
  std::size_t size() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }

  Tensor forward(const Tensor& x, Tape* tape = nullptr) const;
  // Reverse pass over a recorded tape. Accumulates parameter gradients and
  // returns dL/dx. Throws StateError if the tape holds no forward pass.
  Tensor backward(const Tape& tape, const Tensor& dy);

  void zero_grad();
  std::vector<LayerParams*> parameters();
  std::vector<const LayerParams*> parameters() const;

  void set_backend(Backend b) { backend_ = b; }

 private:
  std::vector<Layer> layers_;
  Backend backend_ = Backend::parallel;
};

}  // namespace gazecone::nn

#pragma once

#include <span>
#include <string>
#include <vector>

#include "gazecone/nn.hpp"

namespace gazecone::nn {

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.01;
  double momentum = 0.9;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// SGD with momentum (v <- momentum*v + g; p <- p - lr*v) or Adam. Holds the
/// per-parameter state; the parameter list must stay the same across steps.
/// Each step consumes the gradients and zeroes the accumulators.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  void step(std::span<LayerParams* const> params);
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> first_, second_;
  long steps_ = 0;
};

// One momentum-SGD update with caller-held velocity buffers (one per weight
// and bias tensor, in parameter order). lr == 0 leaves parameters unchanged.
void sgd_step(std::span<LayerParams* const> params, std::vector<Tensor>& velocity, double lr, double momentum);

}  // namespace gazecone::nn

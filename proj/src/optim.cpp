#include "gazecone/optim.hpp"

#include <cmath>

#include "gazecone/errors.hpp"

namespace gazecone::nn {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

namespace {

void check_rates(double lr, double momentum) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

std::vector<Tensor*> flat_tensors(std::span<LayerParams* const> params, bool grads) {
  std::vector<Tensor*> out;
  for (auto* p : params) {
    out.push_back(grads ? &p->weight_grad : &p->weight);
    out.push_back(grads ? &p->bias_grad : &p->bias);
  }
  return out;
}

void ensure_state(std::vector<Tensor>& state, const std::vector<Tensor*>& values) {
  if (state.empty()) {
    for (auto* t : values) state.emplace_back(t->shape());
  }
  if (state.size() != values.size()) throw StateError("optimizer state does not match the parameter list");
}

}  // namespace

void sgd_step(std::span<LayerParams* const> params, std::vector<Tensor>& velocity, double lr, double momentum) {
  check_rates(lr, momentum);
  auto values = flat_tensors(params, false);
  auto grads = flat_tensors(params, true);
  ensure_state(velocity, values);
  for (std::size_t t = 0; t < values.size(); ++t) {
    auto v = velocity[t].data();
    auto p = values[t]->data();
    auto g = grads[t]->data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= lr * v[i];
    }
    grads[t]->zero();
  }
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  check_rates(cfg_.lr, cfg_.momentum);
  if (cfg_.kind == OptimizerKind::adam && !(cfg_.beta1 >= 0 && cfg_.beta1 < 1 && cfg_.beta2 >= 0 && cfg_.beta2 < 1)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
}

void Optimizer::step(std::span<LayerParams* const> params) {
  if (cfg_.kind == OptimizerKind::sgd) {
    sgd_step(params, first_, cfg_.lr, cfg_.momentum);
    return;
  }
  auto values = flat_tensors(params, false);
  auto grads = flat_tensors(params, true);
  ensure_state(first_, values);
  ensure_state(second_, values);
  ++steps_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (std::size_t t = 0; t < values.size(); ++t) {
    auto m = first_[t].data();
    auto s = second_[t].data();
    auto p = values[t]->data();
    auto g = grads[t]->data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      p[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + cfg_.eps);
    }
    grads[t]->zero();
  }
}

}  // namespace gazecone::nn

#include "gazecone/nn.hpp"

#include <algorithm>
#include <cmath>

#include "gazecone/errors.hpp"

namespace gazecone::nn {

LayerParams::LayerParams(Shape weight_shape, Shape bias_shape)
    : weight(weight_shape), bias(bias_shape), weight_grad(weight_shape), bias_grad(bias_shape) {}

LayerParams::LayerParams(Tensor w, Tensor b)
    : weight(std::move(w)), bias(std::move(b)), weight_grad(weight.shape()), bias_grad(bias.shape()) {}

void LayerParams::zero_grad() {
  weight_grad.zero();
  bias_grad.zero();
}

void LayerParams::init_glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& w : weight.data()) w = rng.uniform(-limit, limit);
  bias.zero();
}

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::softmax: return "softmax";
    case ActivationKind::maxpool2x2: return "maxpool2x2";
  }
  return "?";
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

namespace {

kernels::DenseDims dense_dims(const Tensor& x, const LayerParams& p) {
  if (x.rank() != 2 || p.weight.rank() != 2 || x.dim(1) != p.weight.dim(0)) {
    throw DimensionError("dense: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(p.weight.shape()));
  }
  if (p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(1)) {
    throw DimensionError("dense: bias " + shape_str(p.bias.shape()) + " incompatible with weight " +
                         shape_str(p.weight.shape()));
  }
  return {x.dim(0), x.dim(1), p.weight.dim(1)};
}

kernels::ConvDims conv_dims(const Tensor& x, const LayerParams& p, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || p.weight.rank() != 4 || x.dim(1) != p.weight.dim(1)) {
    throw DimensionError("conv2d: input " + shape_str(x.shape()) + " incompatible with weight " +
                         shape_str(p.weight.shape()));
  }
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  kernels::ConvDims d;
  d.batch = x.dim(0);
  d.in_channels = x.dim(1);
  d.height = x.dim(2);
  d.width = x.dim(3);
  d.out_channels = p.weight.dim(0);
  d.kernel_h = p.weight.dim(2);
  d.kernel_w = p.weight.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (d.kernel_h > d.height + 2 * pad || d.kernel_w > d.width + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(p.weight.shape()) + " larger than padded input " +
                         shape_str(x.shape()) + " with pad " + std::to_string(pad));
  }
  return d;
}

}  // namespace

Tensor dense_forward(const Tensor& x, const LayerParams& p, Backend backend) {
  const auto d = dense_dims(x, p);
  require_finite(x, "dense input");
  Tensor y({d.batch, d.out});
  if (backend == Backend::serial) {
    kernels::serial::dense_forward(d, x.data(), p.weight.data(), p.bias.data(), y.data());
  } else {
    kernels::parallel::dense_forward(d, x.data(), p.weight.data(), p.bias.data(), y.data());
  }
  return y;
}

Tensor dense_backward(const Tensor& x, const Tensor& dy, LayerParams& p, Backend backend) {
  const auto d = dense_dims(x, p);
  if (dy.rank() != 2 || dy.dim(0) != d.batch || dy.dim(1) != d.out) {
    throw DimensionError("dense backward: upstream " + shape_str(dy.shape()) + " vs output [" +
                         std::to_string(d.batch) + "," + std::to_string(d.out) + "]");
  }
  Tensor dx(x.shape());
  if (backend == Backend::serial) {
    kernels::serial::dense_backward(d, x.data(), p.weight.data(), dy.data(), dx.data(), p.weight_grad.data(),
                                    p.bias_grad.data());
  } else {
    kernels::parallel::dense_backward(d, x.data(), p.weight.data(), dy.data(), dx.data(), p.weight_grad.data(),
                                      p.bias_grad.data());
  }
  return dx;
}

Tensor conv2d_forward(const Tensor& x, const LayerParams& p, std::size_t stride, std::size_t pad, Backend backend) {
  const auto d = conv_dims(x, p, stride, pad);
  require_finite(x, "conv2d input");
  Tensor y({d.batch, d.out_channels, d.out_height(), d.out_width()});
  if (backend == Backend::serial) {
    kernels::serial::conv2d_forward(d, x.data(), p.weight.data(), p.bias.data(), y.data());
  } else {
    kernels::parallel::conv2d_forward(d, x.data(), p.weight.data(), p.bias.data(), y.data());
  }
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& dy, LayerParams& p, std::size_t stride, std::size_t pad,
                       Backend backend) {
  const auto d = conv_dims(x, p, stride, pad);
  const Shape out_shape{d.batch, d.out_channels, d.out_height(), d.out_width()};
  if (dy.shape() != out_shape) {
    throw DimensionError("conv2d backward: upstream " + shape_str(dy.shape()) + " vs output " +
                         shape_str(out_shape));
  }
  Tensor dx(x.shape());
  if (backend == Backend::serial) {
    kernels::serial::conv2d_backward(d, x.data(), p.weight.data(), dy.data(), dx.data(), p.weight_grad.data(),
                                     p.bias_grad.data());
  } else {
    kernels::parallel::conv2d_backward(d, x.data(), p.weight.data(), dy.data(), dx.data(), p.weight_grad.data(),
                                       p.bias_grad.data());
  }
  return dx;
}

namespace {

kernels::PoolDims pool_dims(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) < 2 || x.dim(3) < 2) {
    throw DimensionError("maxpool2x2: expected [batch,c,h>=2,w>=2], got " + shape_str(x.shape()));
  }
  return {x.dim(0) * x.dim(1), x.dim(2), x.dim(3)};
}

}  // namespace

Tensor activation_forward(const Tensor& x, ActivationKind kind) {
  require_finite(x, to_string(kind) + " input");
  switch (kind) {
    case ActivationKind::relu: {
      Tensor y = x;
      for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case ActivationKind::sigmoid: {
      Tensor y = x;
      for (auto& v : y.data()) v = sigmoid(v);
      return y;
    }
    case ActivationKind::softmax: {
      if (x.rank() == 0) throw DimensionError("softmax needs rank >= 1");
      Tensor y = x;
      const std::size_t n = x.shape().back();
      for (std::size_t row = 0; row < x.size() / n; ++row) {
        auto r = y.data().subspan(row * n, n);
        const double m = *std::max_element(r.begin(), r.end());
        double s = 0.0;
        for (auto& v : r) s += (v = std::exp(v - m));
        for (auto& v : r) v /= s;
      }
      return y;
    }
    case ActivationKind::maxpool2x2: {
      const auto d = pool_dims(x);
      Tensor y({x.dim(0), x.dim(1), d.out_height(), d.out_width()});
      std::vector<std::size_t> argmax(y.size());
      kernels::parallel::maxpool2x2_forward(d, x.data(), y.data(), argmax);
      return y;
    }
  }
  return x;
}

Tensor activation_backward(const Tensor& x, const Tensor& y, const Tensor& dy, ActivationKind kind) {
  require_same_shape(y, dy, "activation output", "upstream gradient");
  switch (kind) {
    case ActivationKind::relu: {
      Tensor dx = dy;
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
      return dx;
    }
    case ActivationKind::sigmoid: {
      Tensor dx = dy;
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
      return dx;
    }
    case ActivationKind::softmax: {
      Tensor dx = dy;
      const std::size_t n = y.shape().back();
      for (std::size_t row = 0; row < y.size() / n; ++row) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[row * n + j] * y[row * n + j];
        for (std::size_t j = 0; j < n; ++j) dx[row * n + j] = y[row * n + j] * (dy[row * n + j] - dot);
      }
      return dx;
    }
    case ActivationKind::maxpool2x2: {
      const auto d = pool_dims(x);
      Tensor scratch(y.shape());
      std::vector<std::size_t> argmax(y.size());
      kernels::parallel::maxpool2x2_forward(d, x.data(), scratch.data(), argmax);
      Tensor dx(x.shape());
      kernels::parallel::maxpool2x2_backward(d, argmax, dy.data(), dx.data());
      return dx;
    }
  }
  return dy;
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense layer{LayerParams({in, out}, {out})};
  layer.params.init_glorot(rng, in, out);
  return layer;
}

Conv2d make_conv(std::size_t in_c, std::size_t out_c, std::size_t kernel, std::size_t stride, std::size_t pad,
                 Rng& rng) {
  Conv2d layer{LayerParams({out_c, in_c, kernel, kernel}, {out_c}), stride, pad};
  layer.params.init_glorot(rng, in_c * kernel * kernel, out_c * kernel * kernel);
  return layer;
}

Sequential& Sequential::add(Layer layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Tape* tape) const {
  if (tape) {
    tape->inputs.clear();
    tape->recorded = false;
  }
  Tensor cur = x;
  for (const auto& layer : layers_) {
    if (tape) tape->inputs.push_back(cur);
    cur = std::visit(
        [&](const auto& l) -> Tensor {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Dense>) {
            return dense_forward(cur, l.params, backend_);
          } else if constexpr (std::is_same_v<L, Conv2d>) {
            return conv2d_forward(cur, l.params, l.stride, l.pad, backend_);
          } else if constexpr (std::is_same_v<L, Activation>) {
            return activation_forward(cur, l.kind);
          } else {
            return cur.reshaped({cur.dim(0), cur.size() / cur.dim(0)});
          }
        },
        layer);
  }
  if (tape) {
    tape->output = cur;
    tape->recorded = true;
  }
  return cur;
}

Tensor Sequential::backward(const Tape& tape, const Tensor& dy) {
  if (!tape.recorded || tape.inputs.size() != layers_.size()) {
    throw StateError("backward called without a recorded forward pass");
  }
  require_same_shape(tape.output, dy, "recorded output", "upstream gradient");
  Tensor grad = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const Tensor& in = tape.inputs[i];
    const Tensor& out = (i + 1 < layers_.size()) ? tape.inputs[i + 1] : tape.output;
    grad = std::visit(
        [&](auto& l) -> Tensor {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, Dense>) {
            return dense_backward(in, grad, l.params, backend_);
          } else if constexpr (std::is_same_v<L, Conv2d>) {
            return conv2d_backward(in, grad, l.params, l.stride, l.pad, backend_);
          } else if constexpr (std::is_same_v<L, Activation>) {
            return activation_backward(in, out, grad, l.kind);
          } else {
            return grad.reshaped(in.shape());
          }
        },
        layers_[i]);
  }
  return grad;
}

void Sequential::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::vector<LayerParams*> Sequential::parameters() {
  std::vector<LayerParams*> out;
  for (auto& layer : layers_) {
    if (auto* d = std::get_if<Dense>(&layer)) out.push_back(&d->params);
    if (auto* c = std::get_if<Conv2d>(&layer)) out.push_back(&c->params);
  }
  return out;
}

std::vector<const LayerParams*> Sequential::parameters() const {
  std::vector<const LayerParams*> out;
  for (const auto& layer : layers_) {
    if (const auto* d = std::get_if<Dense>(&layer)) out.push_back(&d->params);
    if (const auto* c = std::get_if<Conv2d>(&layer)) out.push_back(&c->params);
  }
  return out;
}

}  // namespace gazecone::nn

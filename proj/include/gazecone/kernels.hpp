#pragma once

// Compute kernels behind the layers. Every kernel exists twice: a plain
// serial reference in `serial` and an OpenMP version in `parallel`. The
// parallel versions partition work so that each output element is owned by
// exactly one thread and summed in a fixed order, so results do not depend on
// the thread count.

#include <cstddef>
#include <span>

namespace gazecone::kernels {

enum class Backend { serial, parallel };

struct DenseDims {
  std::size_t batch = 0, in = 0, out = 0;
};

struct ConvDims {
  std::size_t batch = 0, in_channels = 0, height = 0, width = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, pad = 0;
  std::size_t out_height() const { return (height + 2 * pad - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel_w) / stride + 1; }
};

struct PoolDims {
  std::size_t planes = 0, height = 0, width = 0;  // planes = batch * channels
  std::size_t out_height() const { return height / 2; }
  std::size_t out_width() const { return width / 2; }
};

#define GAZECONE_KERNEL_DECLS                                                                   \
  /* y[b,o] = sum_i x[b,i] w[i,o] + bias[o] */                                                  \
  void dense_forward(const DenseDims& d, std::span<const double> x, std::span<const double> w,  \
                     std::span<const double> bias, std::span<double> y);                         \
  /* dx (may be empty) is overwritten; dw and dbias are accumulated into. */                     \
  void dense_backward(const DenseDims& d, std::span<const double> x, std::span<const double> w, \
                      std::span<const double> dy, std::span<double> dx, std::span<double> dw,    \
                      std::span<double> dbias);                                                  \
  void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,  \
                      std::span<const double> bias, std::span<double> y);                        \
  void conv2d_backward(const ConvDims& d, std::span<const double> x, std::span<const double> w, \
                       std::span<const double> dy, std::span<double> dx, std::span<double> dw,   \
                       std::span<double> dbias);                                                 \
  /* argmax receives the flat input index chosen for each output cell. */                        \
  void maxpool2x2_forward(const PoolDims& d, std::span<const double> x, std::span<double> y,     \
                          std::span<std::size_t> argmax);                                        \
  void maxpool2x2_backward(const PoolDims& d, std::span<const std::size_t> argmax,               \
                           std::span<const double> dy, std::span<double> dx);

namespace serial {
GAZECONE_KERNEL_DECLS
}  // namespace serial

namespace parallel {
GAZECONE_KERNEL_DECLS
}  // namespace parallel

#undef GAZECONE_KERNEL_DECLS

int max_threads();

}  // namespace gazecone::kernels

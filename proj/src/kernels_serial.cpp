#include <algorithm>

#include "gazecone/kernels.hpp"

namespace gazecone::kernels::serial {

void dense_forward(const DenseDims& d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> bias, std::span<double> y) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < d.in; ++i) acc += x[b * d.in + i] * w[i * d.out + o];
      y[b * d.out + o] = acc;
    }
  }
}

void dense_backward(const DenseDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                    std::span<double> dbias) {
  for (std::size_t i = 0; i < d.in; ++i) {
    for (std::size_t o = 0; o < d.out; ++o) {
      double acc = 0.0;
      for (std::size_t b = 0; b < d.batch; ++b) acc += x[b * d.in + i] * dy[b * d.out + o];
      dw[i * d.out + o] += acc;
    }
  }
  for (std::size_t o = 0; o < d.out; ++o) {
    double acc = 0.0;
    for (std::size_t b = 0; b < d.batch; ++b) acc += dy[b * d.out + o];
    dbias[o] += acc;
  }
  if (dx.empty()) return;
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t i = 0; i < d.in; ++i) {
      double acc = 0.0;
      for (std::size_t o = 0; o < d.out; ++o) acc += dy[b * d.out + o] * w[i * d.out + o];
      dx[b * d.in + i] = acc;
    }
  }
}

namespace {

// Input value at padded coordinates, zero outside the image.
double padded(const ConvDims& d, std::span<const double> x, std::size_t b, std::size_t c, long ih, long iw) {
  if (ih < 0 || iw < 0 || ih >= static_cast<long>(d.height) || iw >= static_cast<long>(d.width)) return 0.0;
  return x[((b * d.in_channels + c) * d.height + ih) * d.width + iw];
}

}  // namespace

void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width();
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          double acc = bias[o];
          for (std::size_t c = 0; c < d.in_channels; ++c) {
            for (std::size_t kh = 0; kh < d.kernel_h; ++kh) {
              for (std::size_t kw = 0; kw < d.kernel_w; ++kw) {
                const long ih = static_cast<long>(oh * d.stride + kh) - static_cast<long>(d.pad);
                const long iw = static_cast<long>(ow * d.stride + kw) - static_cast<long>(d.pad);
                acc += w[((o * d.in_channels + c) * d.kernel_h + kh) * d.kernel_w + kw] *
                       padded(d, x, b, c, ih, iw);
              }
            }
          }
          y[((b * d.out_channels + o) * oh_n + oh) * ow_n + ow] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width();
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          const double g = dy[((b * d.out_channels + o) * oh_n + oh) * ow_n + ow];
          dbias[o] += g;
          for (std::size_t c = 0; c < d.in_channels; ++c) {
            for (std::size_t kh = 0; kh < d.kernel_h; ++kh) {
              for (std::size_t kw = 0; kw < d.kernel_w; ++kw) {
                const long ih = static_cast<long>(oh * d.stride + kh) - static_cast<long>(d.pad);
                const long iw = static_cast<long>(ow * d.stride + kw) - static_cast<long>(d.pad);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(d.height) || iw >= static_cast<long>(d.width)) continue;
                const std::size_t xi = ((b * d.in_channels + c) * d.height + ih) * d.width + iw;
                const std::size_t wi = ((o * d.in_channels + c) * d.kernel_h + kh) * d.kernel_w + kw;
                dw[wi] += g * x[xi];
                if (!dx.empty()) dx[xi] += g * w[wi];
              }
            }
          }
        }
      }
    }
  }
}

void maxpool2x2_forward(const PoolDims& d, std::span<const double> x, std::span<double> y,
                        std::span<std::size_t> argmax) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width();
  for (std::size_t p = 0; p < d.planes; ++p) {
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        std::size_t best = (p * d.height + 2 * oh) * d.width + 2 * ow;
        for (std::size_t dh = 0; dh < 2; ++dh) {
          for (std::size_t dw = 0; dw < 2; ++dw) {
            const std::size_t idx = (p * d.height + 2 * oh + dh) * d.width + 2 * ow + dw;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t oi = (p * oh_n + oh) * ow_n + ow;
        y[oi] = x[best];
        argmax[oi] = best;
      }
    }
  }
}

void maxpool2x2_backward(const PoolDims& d, std::span<const std::size_t> argmax, std::span<const double> dy,
                         std::span<double> dx) {
  std::fill(dx.begin(), dx.end(), 0.0);
  const std::size_t n_out = d.planes * d.out_height() * d.out_width();
  for (std::size_t i = 0; i < n_out; ++i) dx[argmax[i]] += dy[i];
}

}  // namespace gazecone::kernels::serial

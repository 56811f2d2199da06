#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gazecone/kernels.hpp"

namespace gazecone::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

namespace {

using idx = std::ptrdiff_t;

// Range of output columns ow whose input column ow*stride - pad + k lies in [0, width).
struct ValidRange {
  std::size_t lo, hi;
};

ValidRange valid_outputs(std::size_t out_n, std::size_t in_n, std::size_t stride, std::size_t pad, std::size_t k) {
  std::size_t lo = 0;
  while (lo < out_n && lo * stride + k < pad) ++lo;
  std::size_t hi = out_n;
  while (hi > lo && (hi - 1) * stride + k >= pad + in_n) --hi;
  return {lo, hi};
}

}  // namespace

void dense_forward(const DenseDims& d, std::span<const double> x, std::span<const double> w,
                   std::span<const double> bias, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (idx b = 0; b < static_cast<idx>(d.batch); ++b) {
    double* yr = y.data() + b * d.out;
    std::copy(bias.begin(), bias.end(), yr);
    const double* xr = x.data() + b * d.in;
    for (std::size_t i = 0; i < d.in; ++i) {
      const double xv = xr[i];
      const double* wr = w.data() + i * d.out;
      for (std::size_t o = 0; o < d.out; ++o) yr[o] += xv * wr[o];
    }
  }
}

void dense_backward(const DenseDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                    std::span<double> dbias) {
#pragma omp parallel
  {
#pragma omp for schedule(static) nowait
    for (idx i = 0; i < static_cast<idx>(d.in); ++i) {
      double* dwr = dw.data() + i * d.out;
      for (std::size_t b = 0; b < d.batch; ++b) {
        const double xv = x[b * d.in + i];
        const double* dyr = dy.data() + b * d.out;
        for (std::size_t o = 0; o < d.out; ++o) dwr[o] += xv * dyr[o];
      }
    }
#pragma omp for schedule(static) nowait
    for (idx o = 0; o < static_cast<idx>(d.out); ++o) {
      double acc = 0.0;
      for (std::size_t b = 0; b < d.batch; ++b) acc += dy[b * d.out + o];
      dbias[o] += acc;
    }
    if (!dx.empty()) {
#pragma omp for schedule(static)
      for (idx b = 0; b < static_cast<idx>(d.batch); ++b) {
        const double* dyr = dy.data() + b * d.out;
        for (std::size_t i = 0; i < d.in; ++i) {
          const double* wr = w.data() + i * d.out;
          double acc = 0.0;
          for (std::size_t o = 0; o < d.out; ++o) acc += dyr[o] * wr[o];
          dx[b * d.in + i] = acc;
        }
      }
    }
  }
}

void conv2d_forward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width();
  const idx planes = static_cast<idx>(d.batch * d.out_channels);
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < planes; ++p) {
    const std::size_t b = p / d.out_channels, o = p % d.out_channels;
    double* yp = y.data() + p * oh_n * ow_n;
    std::fill(yp, yp + oh_n * ow_n, bias[o]);
    for (std::size_t c = 0; c < d.in_channels; ++c) {
      const double* xp = x.data() + (b * d.in_channels + c) * d.height * d.width;
      for (std::size_t kh = 0; kh < d.kernel_h; ++kh) {
        const auto rows = valid_outputs(oh_n, d.height, d.stride, d.pad, kh);
        for (std::size_t kw = 0; kw < d.kernel_w; ++kw) {
          const double wv = w[((o * d.in_channels + c) * d.kernel_h + kh) * d.kernel_w + kw];
          const auto cols = valid_outputs(ow_n, d.width, d.stride, d.pad, kw);
          for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
            const double* xr = xp + (oh * d.stride + kh - d.pad) * d.width;
            double* yr = yp + oh * ow_n;
            for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) yr[ow] += wv * xr[ow * d.stride + kw - d.pad];
          }
        }
      }
    }
  }
}

void conv2d_backward(const ConvDims& d, std::span<const double> x, std::span<const double> w,
                     std::span<const double> dy, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias) {
  const std::size_t oh_n = d.out_height(), ow_n = d.out_width();
#pragma omp parallel
  {
    // Weight and bias gradients: one output channel per thread.
#pragma omp for schedule(static) nowait
    for (idx o = 0; o < static_cast<idx>(d.out_channels); ++o) {
      for (std::size_t b = 0; b < d.batch; ++b) {
        const double* dyp = dy.data() + (b * d.out_channels + o) * oh_n * ow_n;
        double acc = 0.0;
        for (std::size_t i = 0; i < oh_n * ow_n; ++i) acc += dyp[i];
        dbias[o] += acc;
        for (std::size_t c = 0; c < d.in_channels; ++c) {
          const double* xp = x.data() + (b * d.in_channels + c) * d.height * d.width;
          for (std::size_t kh = 0; kh < d.kernel_h; ++kh) {
            const auto rows = valid_outputs(oh_n, d.height, d.stride, d.pad, kh);
            for (std::size_t kw = 0; kw < d.kernel_w; ++kw) {
              const auto cols = valid_outputs(ow_n, d.width, d.stride, d.pad, kw);
              double g = 0.0;
              for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                const double* xr = xp + (oh * d.stride + kh - d.pad) * d.width;
                const double* dyr = dyp + oh * ow_n;
                for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) g += dyr[ow] * xr[ow * d.stride + kw - d.pad];
              }
              dw[((o * d.in_channels + c) * d.kernel_h + kh) * d.kernel_w + kw] += g;
            }
          }
        }
      }
    }
    // Input gradient: one sample per thread.
    if (!dx.empty()) {
#pragma omp for schedule(static)
      for (idx b = 0; b < static_cast<idx>(d.batch); ++b) {
        double* dxb = dx.data() + b * d.in_channels * d.height * d.width;
        std::fill(dxb, dxb + d.in_channels * d.height * d.width, 0.0);
        for (std::size_t o = 0; o < d.out_channels; ++o) {
          const double* dyp = dy.data() + (b * d.out_channels + o) * oh_n * ow_n;
          for (std::size_t c = 0; c < d.in_channels; ++c) {
            double* dxp = dxb + c * d.height * d.width;
            for (std::size_t kh = 0; kh < d.kernel_h; ++kh) {
              const auto rows = valid_outputs(oh_n, d.height, d.stride, d.pad, kh);
              for (std::size_t kw = 0; kw < d.kernel_w; ++kw) {
                const double wv = w[((o * d.in_channels + c) * d.kernel_h + kh) * d.kernel_w + kw];
                const auto cols = valid_outputs(ow_n, d.width, d.stride, d.pad, kw);
                for (std::size_t oh = rows.lo; oh < rows.hi; ++oh) {
                  double* dxr = dxp + (oh * d.stride + kh - d.pad) * d.width;
                  const double* dyr = dyp + oh * ow_n;
                  for (std::size_t ow = cols.lo; ow < cols.hi; ++ow) dxr[ow * d.stride + kw - d.pad] += wv * dyr[ow];
                }
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
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(d.planes); ++p) {
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        const std::size_t base = (p * d.height + 2 * oh) * d.width + 2 * ow;
        std::size_t best = base;
        const std::size_t cand[3] = {base + 1, base + d.width, base + d.width + 1};
        for (auto c : cand) {
          if (x[c] > x[best]) best = c;
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
  const std::size_t per_in = d.height * d.width, per_out = d.out_height() * d.out_width();
#pragma omp parallel for schedule(static)
  for (idx p = 0; p < static_cast<idx>(d.planes); ++p) {
    std::fill(dx.begin() + p * per_in, dx.begin() + (p + 1) * per_in, 0.0);
    for (std::size_t i = p * per_out; i < (p + 1) * per_out; ++i) dx[argmax[i]] += dy[i];
  }
}

}  // namespace parallel
}  // namespace gazecone::kernels

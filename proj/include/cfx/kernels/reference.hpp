#pragma once

// Serial reference kernels. They are written as the plain loop nests, kept
// generic over the scalar type, and used in two places: as the comparison
// target for the parallel kernels, and (instantiated with double) as the
// shadow forward path of the finite-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>

#include "cfx/kernels/geometry.hpp"

namespace cfx::kernels::reference {

template <class T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w, std::span<const T> bias,
                    std::span<T> y) {
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t oh = 0; oh < g.out_h; ++oh)
      for (std::int64_t ow = 0; ow < g.out_w; ++ow)
        for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
          T s = bias.empty() ? T(0) : bias[oc];
          for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
            const std::int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
              const std::int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              for (std::int64_t ic = 0; ic < g.in_c; ++ic)
                s += x[((b * g.in_h + ih) * g.in_w + iw) * g.in_c + ic] *
                     w[((kh * g.k_w + kw) * g.in_c + ic) * g.out_c + oc];
            }
          }
          y[((b * g.out_h + oh) * g.out_w + ow) * g.out_c + oc] = s;
        }
}

/// gx = conv2d^T(gy). Also the forward pass of conv_transpose2d.
template <class T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> gy, std::span<const T> w, std::span<T> gx) {
  std::fill(gx.begin(), gx.end(), T(0));
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t oh = 0; oh < g.out_h; ++oh)
      for (std::int64_t ow = 0; ow < g.out_w; ++ow)
        for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
          const T go = gy[((b * g.out_h + oh) * g.out_w + ow) * g.out_c + oc];
          for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
            const std::int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
              const std::int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              for (std::int64_t ic = 0; ic < g.in_c; ++ic)
                gx[((b * g.in_h + ih) * g.in_w + iw) * g.in_c + ic] +=
                    go * w[((kh * g.k_w + kw) * g.in_c + ic) * g.out_c + oc];
            }
          }
        }
}

/// Overwrites gw and (when non-empty) gbias.
template <class T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy, std::span<T> gw,
                            std::span<T> gbias) {
  std::fill(gw.begin(), gw.end(), T(0));
  std::fill(gbias.begin(), gbias.end(), T(0));
  for (std::int64_t b = 0; b < g.batch; ++b)
    for (std::int64_t oh = 0; oh < g.out_h; ++oh)
      for (std::int64_t ow = 0; ow < g.out_w; ++ow)
        for (std::int64_t oc = 0; oc < g.out_c; ++oc) {
          const T go = gy[((b * g.out_h + oh) * g.out_w + ow) * g.out_c + oc];
          if (!gbias.empty()) gbias[oc] += go;
          for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
            const std::int64_t ih = oh * g.stride - g.pad_top + kh;
            if (ih < 0 || ih >= g.in_h) continue;
            for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
              const std::int64_t iw = ow * g.stride - g.pad_left + kw;
              if (iw < 0 || iw >= g.in_w) continue;
              for (std::int64_t ic = 0; ic < g.in_c; ++ic)
                gw[((kh * g.k_w + kw) * g.in_c + ic) * g.out_c + oc] +=
                    go * x[((b * g.in_h + ih) * g.in_w + iw) * g.in_c + ic];
            }
          }
        }
}

/// 2x2 window, stride 2. `argmax` receives the flat input index chosen for
/// each output cell; ties go to the first cell in row-major window order.
template <class T>
void maxpool2_forward(std::int64_t batch, std::int64_t h, std::int64_t w, std::int64_t c, std::span<const T> x,
                      std::span<T> y, std::span<std::int64_t> argmax) {
  const std::int64_t oh_n = h / 2, ow_n = w / 2;
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t oh = 0; oh < oh_n; ++oh)
      for (std::int64_t ow = 0; ow < ow_n; ++ow)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          std::int64_t best = ((b * h + 2 * oh) * w + 2 * ow) * c + ch;
          for (std::int64_t dh = 0; dh < 2; ++dh)
            for (std::int64_t dw = 0; dw < 2; ++dw) {
              const std::int64_t idx = ((b * h + 2 * oh + dh) * w + 2 * ow + dw) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          const std::int64_t o = ((b * oh_n + oh) * ow_n + ow) * c + ch;
          y[o] = x[best];
          if (!argmax.empty()) argmax[o] = best;
        }
}

template <class T>
void maxpool2_backward(std::span<const T> gy, std::span<const std::int64_t> argmax, std::span<T> gx) {
  std::fill(gx.begin(), gx.end(), T(0));
  for (std::size_t o = 0; o < gy.size(); ++o) gx[argmax[o]] += gy[o];
}

/// y[B,m] = x[B,n] * w[n,m] + bias[m]
template <class T>
void dense_forward(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const T> x, std::span<const T> w,
                   std::span<const T> bias, std::span<T> y) {
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t j = 0; j < m; ++j) {
      T s = bias.empty() ? T(0) : bias[j];
      for (std::int64_t i = 0; i < n; ++i) s += x[b * n + i] * w[i * m + j];
      y[b * m + j] = s;
    }
}

template <class T>
void dense_backward_input(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const T> gy,
                          std::span<const T> w, std::span<T> gx) {
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t i = 0; i < n; ++i) {
      T s = T(0);
      for (std::int64_t j = 0; j < m; ++j) s += gy[b * m + j] * w[i * m + j];
      gx[b * n + i] = s;
    }
}

template <class T>
void dense_backward_weight(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const T> x,
                           std::span<const T> gy, std::span<T> gw, std::span<T> gbias) {
  std::fill(gw.begin(), gw.end(), T(0));
  std::fill(gbias.begin(), gbias.end(), T(0));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t j = 0; j < m; ++j) {
      const T go = gy[b * m + j];
      if (!gbias.empty()) gbias[j] += go;
      for (std::int64_t i = 0; i < n; ++i) gw[i * m + j] += x[b * n + i] * go;
    }
}

template <class T>
void relu_forward(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void sigmoid_forward(std::span<const T> x, std::span<T> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

/// Row-wise softmax over the last axis with max subtraction.
template <class T>
void softmax_forward(std::int64_t rows, std::int64_t k, std::span<const T> x, std::span<T> y) {
  for (std::int64_t r = 0; r < rows; ++r) {
    T mx = x[r * k];
    for (std::int64_t j = 1; j < k; ++j) mx = std::max(mx, x[r * k + j]);
    T s = T(0);
    for (std::int64_t j = 0; j < k; ++j) {
      y[r * k + j] = std::exp(x[r * k + j] - mx);
      s += y[r * k + j];
    }
    for (std::int64_t j = 0; j < k; ++j) y[r * k + j] /= s;
  }
}

}  // namespace cfx::kernels::reference

#include "cfx/kernels/parallel.hpp"

#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "cfx/tensor.hpp"

namespace cfx::kernels::parallel {
namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Upper bound on the im2col scratch (floats); larger batches are chunked.
constexpr std::int64_t kMaxColumnFloats = std::int64_t{1} << 23;
constexpr std::int64_t kElementwiseGrain = std::int64_t{1} << 15;

std::atomic<int> g_threads{0};

int resolve_threads() {
  if (const char* env = std::getenv("CFX_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1, omp_get_max_threads());
}

cfx::FloatBuffer& scratch() {
  thread_local cfx::FloatBuffer buf;
  return buf;
}

std::int64_t chunk_images(const ConvGeometry& g) {
  const std::int64_t per_image = g.out_h * g.out_w * g.patch();
  return std::clamp<std::int64_t>(kMaxColumnFloats / std::max<std::int64_t>(per_image, 1), 1, g.batch);
}

// Patch matrix for images [b0, b0 + nb): one row per output pixel, columns in
// (kh, kw, ic) order so that it multiplies the kernel viewed as (kh*kw*in_c, out_c).
void im2col(const ConvGeometry& g, const float* x, std::int64_t b0, std::int64_t nb, float* cols) {
  const std::int64_t patch = g.patch();
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (nb > 1 && threads > 1) schedule(static)
  for (std::int64_t bi = 0; bi < nb; ++bi) {
    const float* img = x + (b0 + bi) * g.in_h * g.in_w * g.in_c;
    float* out = cols + bi * g.out_h * g.out_w * patch;
    for (std::int64_t oh = 0; oh < g.out_h; ++oh)
      for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
        float* row = out + (oh * g.out_w + ow) * patch;
        for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
          const std::int64_t ih = oh * g.stride - g.pad_top + kh;
          for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
            const std::int64_t iw = ow * g.stride - g.pad_left + kw;
            float* dst = row + (kh * g.k_w + kw) * g.in_c;
            if (ih < 0 || ih >= g.in_h || iw < 0 || iw >= g.in_w) {
              std::fill(dst, dst + g.in_c, 0.0f);
            } else {
              const float* src = img + (ih * g.in_w + iw) * g.in_c;
              std::copy(src, src + g.in_c, dst);
            }
          }
        }
      }
  }
}

void col2im_add(const ConvGeometry& g, const float* cols, std::int64_t b0, std::int64_t nb, float* gx) {
  const std::int64_t patch = g.patch();
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (nb > 1 && threads > 1) schedule(static)
  for (std::int64_t bi = 0; bi < nb; ++bi) {
    float* img = gx + (b0 + bi) * g.in_h * g.in_w * g.in_c;
    const float* in = cols + bi * g.out_h * g.out_w * patch;
    for (std::int64_t oh = 0; oh < g.out_h; ++oh)
      for (std::int64_t ow = 0; ow < g.out_w; ++ow) {
        const float* row = in + (oh * g.out_w + ow) * patch;
        for (std::int64_t kh = 0; kh < g.k_h; ++kh) {
          const std::int64_t ih = oh * g.stride - g.pad_top + kh;
          if (ih < 0 || ih >= g.in_h) continue;
          for (std::int64_t kw = 0; kw < g.k_w; ++kw) {
            const std::int64_t iw = ow * g.stride - g.pad_left + kw;
            if (iw < 0 || iw >= g.in_w) continue;
            const float* src = row + (kh * g.k_w + kw) * g.in_c;
            float* dst = img + (ih * g.in_w + iw) * g.in_c;
            for (std::int64_t ic = 0; ic < g.in_c; ++ic) dst[ic] += src[ic];
          }
        }
      }
  }
}

}  // namespace

int thread_count() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n == 0) {
    n = resolve_threads();
    g_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_thread_count(int n) { g_threads.store(std::max(1, n), std::memory_order_relaxed); }

void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y) {
  const std::int64_t patch = g.patch();
  const std::int64_t pix = g.out_h * g.out_w;
  const std::int64_t step = chunk_images(g);
  auto& cols = scratch();
  ConstMap wm(w.data(), patch, g.out_c);
  for (std::int64_t b0 = 0; b0 < g.batch; b0 += step) {
    const std::int64_t nb = std::min(step, g.batch - b0);
    cols.resize(static_cast<std::size_t>(nb * pix * patch));
    im2col(g, x.data(), b0, nb, cols.data());
    ConstMap cm(cols.data(), nb * pix, patch);
    MutMap ym(y.data() + b0 * pix * g.out_c, nb * pix, g.out_c);
    ym.noalias() = cm * wm;
    if (!bias.empty()) {
      Eigen::Map<const Eigen::RowVectorXf> bv(bias.data(), g.out_c);
      ym.rowwise() += bv;
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const float> gy, std::span<const float> w,
                           std::span<float> gx) {
  const std::int64_t patch = g.patch();
  const std::int64_t pix = g.out_h * g.out_w;
  const std::int64_t step = chunk_images(g);
  auto& cols = scratch();
  ConstMap wm(w.data(), patch, g.out_c);
  std::fill(gx.begin(), gx.end(), 0.0f);
  for (std::int64_t b0 = 0; b0 < g.batch; b0 += step) {
    const std::int64_t nb = std::min(step, g.batch - b0);
    cols.resize(static_cast<std::size_t>(nb * pix * patch));
    ConstMap gym(gy.data() + b0 * pix * g.out_c, nb * pix, g.out_c);
    MutMap cm(cols.data(), nb * pix, patch);
    cm.noalias() = gym * wm.transpose();
    col2im_add(g, cols.data(), b0, nb, gx.data());
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const float> x, std::span<const float> gy,
                            std::span<float> gw, std::span<float> gbias) {
  const std::int64_t patch = g.patch();
  const std::int64_t pix = g.out_h * g.out_w;
  const std::int64_t step = chunk_images(g);
  auto& cols = scratch();
  MutMap gwm(gw.data(), patch, g.out_c);
  gwm.setZero();
  for (std::int64_t b0 = 0; b0 < g.batch; b0 += step) {
    const std::int64_t nb = std::min(step, g.batch - b0);
    cols.resize(static_cast<std::size_t>(nb * pix * patch));
    im2col(g, x.data(), b0, nb, cols.data());
    ConstMap cm(cols.data(), nb * pix, patch);
    ConstMap gym(gy.data() + b0 * pix * g.out_c, nb * pix, g.out_c);
    gwm.noalias() += cm.transpose() * gym;
  }
  if (!gbias.empty()) {
    ConstMap gym(gy.data(), g.batch * pix, g.out_c);
    Eigen::Map<Eigen::RowVectorXf> gb(gbias.data(), g.out_c);
    gb = gym.colwise().sum();
  }
}

void maxpool2_forward(std::int64_t batch, std::int64_t h, std::int64_t w, std::int64_t c, std::span<const float> x,
                      std::span<float> y, std::span<std::int64_t> argmax) {
  const std::int64_t oh_n = h / 2, ow_n = w / 2;
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (batch > 1 && threads > 1) schedule(static)
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t oh = 0; oh < oh_n; ++oh)
      for (std::int64_t ow = 0; ow < ow_n; ++ow) {
        const std::int64_t base = ((b * h + 2 * oh) * w + 2 * ow) * c;
        const std::int64_t offs[4] = {0, c, w * c, w * c + c};
        const std::int64_t o = ((b * oh_n + oh) * ow_n + ow) * c;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          std::int64_t best = base + ch;
          for (int k = 1; k < 4; ++k) {
            const std::int64_t idx = base + offs[k] + ch;
            if (x[idx] > x[best]) best = idx;
          }
          y[o + ch] = x[best];
          if (!argmax.empty()) argmax[o + ch] = best;
        }
      }
}

void maxpool2_backward(std::span<const float> gy, std::span<const std::int64_t> argmax, std::span<float> gx) {
  // Windows are disjoint, so every input cell receives at most one contribution.
  std::fill(gx.begin(), gx.end(), 0.0f);
  const std::int64_t n = static_cast<std::int64_t>(gy.size());
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (n > kElementwiseGrain && threads > 1) schedule(static)
  for (std::int64_t o = 0; o < n; ++o) gx[argmax[o]] += gy[o];
}

void dense_forward(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const float> x,
                   std::span<const float> w, std::span<const float> bias, std::span<float> y) {
  ConstMap xm(x.data(), batch, n);
  ConstMap wm(w.data(), n, m);
  MutMap ym(y.data(), batch, m);
  ym.noalias() = xm * wm;
  if (!bias.empty()) {
    Eigen::Map<const Eigen::RowVectorXf> bv(bias.data(), m);
    ym.rowwise() += bv;
  }
}

void dense_backward_input(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const float> gy,
                          std::span<const float> w, std::span<float> gx) {
  ConstMap gym(gy.data(), batch, m);
  ConstMap wm(w.data(), n, m);
  MutMap gxm(gx.data(), batch, n);
  gxm.noalias() = gym * wm.transpose();
}

void dense_backward_weight(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const float> x,
                           std::span<const float> gy, std::span<float> gw, std::span<float> gbias) {
  ConstMap xm(x.data(), batch, n);
  ConstMap gym(gy.data(), batch, m);
  MutMap gwm(gw.data(), n, m);
  gwm.noalias() = xm.transpose() * gym;
  if (!gbias.empty()) {
    Eigen::Map<Eigen::RowVectorXf> gb(gbias.data(), m);
    gb = gym.colwise().sum();
  }
}

void relu_forward(std::span<const float> x, std::span<float> y) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  const int threads = thread_count();
#pragma omp parallel for simd num_threads(threads) if (n > kElementwiseGrain && threads > 1) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void sigmoid_forward(std::span<const float> x, std::span<float> y) {
  const std::int64_t n = static_cast<std::int64_t>(x.size());
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (n > kElementwiseGrain && threads > 1) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0f / (1.0f + std::exp(-x[i]));
}

void softmax_forward(std::int64_t rows, std::int64_t k, std::span<const float> x, std::span<float> y) {
  const int threads = thread_count();
#pragma omp parallel for num_threads(threads) if (rows * k > kElementwiseGrain && threads > 1) schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* in = x.data() + r * k;
    float* out = y.data() + r * k;
    const float mx = *std::max_element(in, in + k);
    float s = 0.0f;
    for (std::int64_t j = 0; j < k; ++j) {
      out[j] = std::exp(in[j] - mx);
      s += out[j];
    }
    const float inv = 1.0f / s;
    for (std::int64_t j = 0; j < k; ++j) out[j] *= inv;
  }
}

}  // namespace cfx::kernels::parallel

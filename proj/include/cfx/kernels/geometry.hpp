#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "cfx/error.hpp"

namespace cfx::kernels {

enum class Padding { Same, Valid };

/// Shape bookkeeping shared by conv2d and its adjoint.
///
/// "same" padding follows the usual convention: the output has
/// ceil(in / stride) rows, the total padding is
/// max((out - 1) * stride + k - in, 0), and when that total is odd the extra
/// row/column goes to the bottom/right. For a 2x2 kernel at stride 1 that means
/// pad_top = pad_left = 0 and one zero row/column past the end.
struct ConvGeometry {
  std::int64_t batch = 0;
  std::int64_t in_h = 0, in_w = 0, in_c = 0;
  std::int64_t k_h = 0, k_w = 0, out_c = 0;
  std::int64_t stride = 1;
  std::int64_t pad_top = 0, pad_left = 0;
  std::int64_t out_h = 0, out_w = 0;

  std::int64_t in_size() const { return batch * in_h * in_w * in_c; }
  std::int64_t out_size() const { return batch * out_h * out_w * out_c; }
  std::int64_t kernel_size() const { return k_h * k_w * in_c * out_c; }
  std::int64_t patch() const { return k_h * k_w * in_c; }

  static ConvGeometry make(std::int64_t batch, std::int64_t in_h, std::int64_t in_w, std::int64_t in_c,
                           std::int64_t k_h, std::int64_t k_w, std::int64_t out_c, std::int64_t stride,
                           Padding padding) {
    if (stride < 1) throw ConfigError("conv stride must be positive, got " + std::to_string(stride));
    ConvGeometry g;
    g.batch = batch;
    g.in_h = in_h;
    g.in_w = in_w;
    g.in_c = in_c;
    g.k_h = k_h;
    g.k_w = k_w;
    g.out_c = out_c;
    g.stride = stride;
    if (padding == Padding::Same) {
      g.out_h = (in_h + stride - 1) / stride;
      g.out_w = (in_w + stride - 1) / stride;
      const std::int64_t pad_h = std::max<std::int64_t>((g.out_h - 1) * stride + k_h - in_h, 0);
      const std::int64_t pad_w = std::max<std::int64_t>((g.out_w - 1) * stride + k_w - in_w, 0);
      g.pad_top = pad_h / 2;
      g.pad_left = pad_w / 2;
      if (k_h > in_h + pad_h || k_w > in_w + pad_w)
        throw DimensionError("kernel " + std::to_string(k_h) + "x" + std::to_string(k_w) +
                             " larger than padded input");
    } else {
      if (k_h > in_h || k_w > in_w)
        throw DimensionError("kernel " + std::to_string(k_h) + "x" + std::to_string(k_w) + " larger than input " +
                             std::to_string(in_h) + "x" + std::to_string(in_w));
      g.out_h = (in_h - k_h) / stride + 1;
      g.out_w = (in_w - k_w) / stride + 1;
    }
    return g;
  }
};

}  // namespace cfx::kernels

#pragma once

// Production float kernels: im2col + Eigen GEMM for the convolution family,
// OpenMP over the batch for the gather/scatter and elementwise loops. Each
// output element is written by exactly one thread in a fixed order, and the
// weight-gradient reductions go through a single-threaded GEMM, so results do
// not depend on the thread count.

#include <cstdint>
#include <span>

#include "cfx/kernels/geometry.hpp"

namespace cfx::kernels::parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const float> gy, std::span<const float> w,
                           std::span<float> gx);
/// Overwrites gw and (when non-empty) gbias.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const float> x, std::span<const float> gy,
                            std::span<float> gw, std::span<float> gbias);

void maxpool2_forward(std::int64_t batch, std::int64_t h, std::int64_t w, std::int64_t c, std::span<const float> x,
                      std::span<float> y, std::span<std::int64_t> argmax);
void maxpool2_backward(std::span<const float> gy, std::span<const std::int64_t> argmax, std::span<float> gx);

void dense_forward(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const float> x,
                   std::span<const float> w, std::span<const float> bias, std::span<float> y);
void dense_backward_input(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const float> gy,
                          std::span<const float> w, std::span<float> gx);
void dense_backward_weight(std::int64_t batch, std::int64_t n, std::int64_t m, std::span<const float> x,
                           std::span<const float> gy, std::span<float> gw, std::span<float> gbias);

void relu_forward(std::span<const float> x, std::span<float> y);
void sigmoid_forward(std::span<const float> x, std::span<float> y);
void softmax_forward(std::int64_t rows, std::int64_t k, std::span<const float> x, std::span<float> y);

/// Worker count used by the OpenMP regions (honours CFX_THREADS).
int thread_count();
void set_thread_count(int n);

}  // namespace cfx::kernels::parallel

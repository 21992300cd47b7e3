#pragma once

// Differentiable operations over Var. Image tensors are (B, H, W, C).

#include <cstdint>
#include <span>
#include <vector>

#include "cfx/autodiff.hpp"
#include "cfx/kernels/geometry.hpp"
#include "cfx/rng.hpp"

namespace cfx::ops {

using kernels::Padding;

/// x: (B,H,W,Cin), kernel: (kh,kw,Cin,Cout), bias: (Cout) or empty Var.
Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::int64_t stride, Padding padding);

/// Adjoint of conv2d. x: (B,H,W,Cin), kernel: (kh,kw,Cout,Cin), bias: (Cout)
/// or empty. Output spatial extent is H*stride x W*stride under "same"
/// padding. Only strides 1 and 2 are supported.
Var conv_transpose2d(const Var& x, const Var& kernel, const Var& bias, std::int64_t stride,
                     Padding padding = Padding::Same);

/// Disjoint 2x2 max-pooling. H and W must be even.
Var maxpool2d(const Var& x);

/// x: (B,n), weights: (n,m), bias: (m) or empty.
Var dense(const Var& x, const Var& weights, const Var& bias);

Var relu(const Var& x);
Var sigmoid(const Var& x);
/// Softmax over the last axis of a (B,k) tensor.
Var softmax(const Var& x);

/// Inverted dropout. Identity when `training` is false or rate == 0.
Var dropout(const Var& x, float rate, bool training, Rng& rng);

Var reshape(const Var& x, Shape shape);
/// (B, ...) -> (B, prod(...))
Var flatten(const Var& x);
/// (B,n) ++ (B,m) -> (B,n+m)
Var concat_cols(const Var& a, const Var& b);
/// Row i of the result is row indices[i] of x; gradients scatter-add back.
Var gather_rows(const Var& x, std::vector<std::int64_t> indices);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, float s);

/// Σ (a - b)^2 as a one-element tensor.
Var l2_sq(const Var& a, const Var& b);
/// Σ (a_i - b_i)^2 per leading-axis row: (B,...) -> (B).
Var row_l2_sq(const Var& a, const Var& b);
/// Σ |a|. The subgradient at 0 is 0.
Var l1(const Var& a);
/// -(1/B) Σ_b Σ_j target·ln(pred + 1e-12) for (B,k) probability rows.
Var categorical_cross_entropy(const Var& pred, const Var& target_onehot);
/// Σ_b max(p[b,y_b] - max_{i != y_b} p[b,i], -kappa).
Var margin_hinge(const Var& probs, std::span<const int> labels, float kappa);
/// Σ_b max(max_{i != t_b} p[b,i] - p[b,t_b], -kappa). Zero gradient once t_b leads by more than kappa.
Var target_hinge(const Var& probs, std::span<const int> targets, float kappa);
/// Sum of all elements as a one-element tensor.
Var sum(const Var& a);

}  // namespace cfx::ops

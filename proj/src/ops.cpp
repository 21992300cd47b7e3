#include "cfx/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "cfx/error.hpp"
#include "cfx/kernels/parallel.hpp"

namespace cfx::ops {
namespace kp = kernels::parallel;

namespace {

void accumulate(Node& parent, Tensor&& g) {
  if (parent.grad.empty()) {
    parent.grad = std::move(g);
    return;
  }
  float* dst = parent.grad.ptr();
  const float* src = g.ptr();
  const std::int64_t n = g.size();
  for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

void require_rank(const Var& v, std::int64_t rank, const char* op, const char* arg) {
  if (v.value().rank() != rank)
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(v.shape()));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

std::span<const float> bias_span(const Var& bias) {
  return bias ? bias.value().data() : std::span<const float>{};
}

std::vector<Var> with_optional(std::vector<Var> vars, const Var& maybe) {
  if (maybe) vars.push_back(maybe);
  return vars;
}

}  // namespace

Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::int64_t stride, Padding padding) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (ks[2] != xs[3])
    throw DimensionError("conv2d: input channels (axis 3) = " + std::to_string(xs[3]) +
                         " but kernel axis 2 = " + std::to_string(ks[2]));
  if (bias && bias.value().size() != ks[3])
    throw DimensionError("conv2d: bias has " + std::to_string(bias.value().size()) + " entries for " +
                         std::to_string(ks[3]) + " output channels");
  const auto g = kernels::ConvGeometry::make(xs[0], xs[1], xs[2], xs[3], ks[0], ks[1], ks[3], stride, padding);

  Tensor y(Shape{g.batch, g.out_h, g.out_w, g.out_c});
  kp::conv2d_forward(g, x.value().data(), kernel.value().data(), bias_span(bias), y.data());

  const bool has_bias = static_cast<bool>(bias);
  return make_node(std::move(y), with_optional({x, kernel}, bias), [g, has_bias](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    if (px.requires_grad) {
      Tensor gx(px.value.shape());
      kp::conv2d_backward_input(g, self.grad.data(), pk.value.data(), gx.data());
      accumulate(px, std::move(gx));
    }
    Node* pb = has_bias ? self.parents[2].get() : nullptr;
    const bool want_b = pb && pb->requires_grad;
    if (pk.requires_grad || want_b) {
      Tensor gw(pk.value.shape());
      Tensor gb = want_b ? Tensor(pb->value.shape()) : Tensor();
      kp::conv2d_backward_weight(g, px.value.data(), self.grad.data(), gw.data(), gb.data());
      if (pk.requires_grad) accumulate(pk, std::move(gw));
      if (want_b) accumulate(*pb, std::move(gb));
    }
  });
}

Var conv_transpose2d(const Var& x, const Var& kernel, const Var& bias, std::int64_t stride, Padding padding) {
  require_rank(x, 4, "conv_transpose2d", "input");
  require_rank(kernel, 4, "conv_transpose2d", "kernel");
  if (stride != 1 && stride != 2)
    throw ConfigError("conv_transpose2d: unsupported stride " + std::to_string(stride) + " (expected 1 or 2)");
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (ks[3] != xs[3])
    throw DimensionError("conv_transpose2d: input channels (axis 3) = " + std::to_string(xs[3]) +
                         " but kernel axis 3 = " + std::to_string(ks[3]));
  const std::int64_t out_c = ks[2];
  if (bias && bias.value().size() != out_c)
    throw DimensionError("conv_transpose2d: bias has " + std::to_string(bias.value().size()) + " entries for " +
                         std::to_string(out_c) + " output channels");
  const std::int64_t out_h = padding == Padding::Same ? xs[1] * stride : (xs[1] - 1) * stride + ks[0];
  const std::int64_t out_w = padding == Padding::Same ? xs[2] * stride : (xs[2] - 1) * stride + ks[1];
  // The conv2d whose adjoint this is maps (out_h, out_w, out_c) -> (H, W, in_c).
  const auto g = kernels::ConvGeometry::make(xs[0], out_h, out_w, out_c, ks[0], ks[1], xs[3], stride, padding);
  if (g.out_h != xs[1] || g.out_w != xs[2])
    throw DimensionError("conv_transpose2d: geometry does not invert for input " + shape_str(xs));

  Tensor y(Shape{xs[0], out_h, out_w, out_c});
  kp::conv2d_backward_input(g, x.value().data(), kernel.value().data(), y.data());
  if (bias) {
    const float* b = bias.value().ptr();
    float* yp = y.ptr();
    const std::int64_t pixels = y.size() / out_c;
    for (std::int64_t p = 0; p < pixels; ++p)
      for (std::int64_t c = 0; c < out_c; ++c) yp[p * out_c + c] += b[c];
  }

  const bool has_bias = static_cast<bool>(bias);
  return make_node(std::move(y), with_optional({x, kernel}, bias), [g, has_bias, out_c](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    if (px.requires_grad) {
      Tensor gx(px.value.shape());
      kp::conv2d_forward(g, self.grad.data(), pk.value.data(), {}, gx.data());
      accumulate(px, std::move(gx));
    }
    if (pk.requires_grad) {
      Tensor gw(pk.value.shape());
      kp::conv2d_backward_weight(g, self.grad.data(), px.value.data(), gw.data(), {});
      accumulate(pk, std::move(gw));
    }
    if (has_bias && self.parents[2]->requires_grad) {
      Tensor gb(Shape{out_c});
      const float* gy = self.grad.ptr();
      const std::int64_t pixels = self.grad.size() / out_c;
      for (std::int64_t p = 0; p < pixels; ++p)
        for (std::int64_t c = 0; c < out_c; ++c) gb[c] += gy[p * out_c + c];
      accumulate(*self.parents[2], std::move(gb));
    }
  });
}

Var maxpool2d(const Var& x) {
  require_rank(x, 4, "maxpool2d", "input");
  const auto& s = x.shape();
  if (s[1] % 2 != 0 || s[2] % 2 != 0)
    throw DimensionError("maxpool2d: spatial dims (axes 1,2) must be even, got " + shape_str(s));
  Tensor y(Shape{s[0], s[1] / 2, s[2] / 2, s[3]});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(y.size()));
  kp::maxpool2_forward(s[0], s[1], s[2], s[3], x.value().data(), y.data(), *argmax);
  return make_node(std::move(y), {x}, [argmax](Node& self) {
    Node& px = *self.parents[0];
    Tensor gx(px.value.shape());
    kp::maxpool2_backward(self.grad.data(), *argmax, gx.data());
    accumulate(px, std::move(gx));
  });
}

Var dense(const Var& x, const Var& weights, const Var& bias) {
  require_rank(x, 2, "dense", "input");
  require_rank(weights, 2, "dense", "weights");
  const std::int64_t batch = x.shape()[0], n = x.shape()[1], m = weights.shape()[1];
  if (weights.shape()[0] != n)
    throw DimensionError("dense: input axis 1 = " + std::to_string(n) + " but weights axis 0 = " +
                         std::to_string(weights.shape()[0]));
  if (bias && bias.value().size() != m)
    throw DimensionError("dense: bias has " + std::to_string(bias.value().size()) + " entries for " +
                         std::to_string(m) + " outputs");
  Tensor y(Shape{batch, m});
  kp::dense_forward(batch, n, m, x.value().data(), weights.value().data(), bias_span(bias), y.data());
  const bool has_bias = static_cast<bool>(bias);
  return make_node(std::move(y), with_optional({x, weights}, bias), [batch, n, m, has_bias](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    if (px.requires_grad) {
      Tensor gx(px.value.shape());
      kp::dense_backward_input(batch, n, m, self.grad.data(), pw.value.data(), gx.data());
      accumulate(px, std::move(gx));
    }
    Node* pb = has_bias ? self.parents[2].get() : nullptr;
    const bool want_b = pb && pb->requires_grad;
    if (pw.requires_grad || want_b) {
      Tensor gw(pw.value.shape());
      Tensor gb = want_b ? Tensor(pb->value.shape()) : Tensor();
      kp::dense_backward_weight(batch, n, m, px.value.data(), self.grad.data(), gw.data(), gb.data());
      if (pw.requires_grad) accumulate(pw, std::move(gw));
      if (want_b) accumulate(*pb, std::move(gb));
    }
  });
}

Var relu(const Var& x) {
  Tensor y(x.shape());
  kp::relu_forward(x.value().data(), y.data());
  return make_node(std::move(y), {x}, [](Node& self) {
    Tensor gx(self.value.shape());
    const float* out = self.value.ptr();
    const float* g = self.grad.ptr();
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = out[i] > 0.0f ? g[i] : 0.0f;
    accumulate(*self.parents[0], std::move(gx));
  });
}

Var sigmoid(const Var& x) {
  Tensor y(x.shape());
  kp::sigmoid_forward(x.value().data(), y.data());
  return make_node(std::move(y), {x}, [](Node& self) {
    Tensor gx(self.value.shape());
    const float* out = self.value.ptr();
    const float* g = self.grad.ptr();
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * out[i] * (1.0f - out[i]);
    accumulate(*self.parents[0], std::move(gx));
  });
}

Var softmax(const Var& x) {
  require_rank(x, 2, "softmax", "input");
  const std::int64_t rows = x.shape()[0], k = x.shape()[1];
  Tensor y(x.shape());
  kp::softmax_forward(rows, k, x.value().data(), y.data());
  return make_node(std::move(y), {x}, [rows, k](Node& self) {
    Tensor gx(self.value.shape());
    const float* p = self.value.ptr();
    const float* g = self.grad.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
      float dot = 0.0f;
      for (std::int64_t j = 0; j < k; ++j) dot += g[r * k + j] * p[r * k + j];
      for (std::int64_t j = 0; j < k; ++j) gx[r * k + j] = p[r * k + j] * (g[r * k + j] - dot);
    }
    accumulate(*self.parents[0], std::move(gx));
  });
}

Var dropout(const Var& x, float rate, bool training, Rng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - rate);
  auto mask = std::make_shared<Tensor>(x.shape());
  Tensor y(x.shape());
  const float* in = x.value().ptr();
  for (std::int64_t i = 0; i < y.size(); ++i) {
    const float m = rng.uniform() < rate ? 0.0f : keep_scale;
    (*mask)[i] = m;
    y[i] = in[i] * m;
  }
  return make_node(std::move(y), {x}, [mask](Node& self) {
    Tensor gx(self.value.shape());
    for (std::int64_t i = 0; i < gx.size(); ++i) gx[i] = self.grad[i] * (*mask)[i];
    accumulate(*self.parents[0], std::move(gx));
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make_node(std::move(y), {x}, [](Node& self) {
    Node& px = *self.parents[0];
    accumulate(px, self.grad.reshaped(px.value.shape()));
  });
}

Var flatten(const Var& x) {
  const std::int64_t b = x.shape().at(0);
  return reshape(x, Shape{b, x.value().size() / b});
}

Var concat_cols(const Var& a, const Var& b) {
  require_rank(a, 2, "concat_cols", "a");
  require_rank(b, 2, "concat_cols", "b");
  const std::int64_t rows = a.shape()[0], na = a.shape()[1], nb = b.shape()[1];
  if (b.shape()[0] != rows)
    throw DimensionError("concat_cols: row counts (axis 0) differ: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  Tensor y(Shape{rows, na + nb});
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().ptr() + r * na, na, y.ptr() + r * (na + nb));
    std::copy_n(b.value().ptr() + r * nb, nb, y.ptr() + r * (na + nb) + na);
  }
  return make_node(std::move(y), {a, b}, [rows, na, nb](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const float* g = self.grad.ptr();
    if (pa.requires_grad) {
      Tensor ga(pa.value.shape());
      for (std::int64_t r = 0; r < rows; ++r) std::copy_n(g + r * (na + nb), na, ga.ptr() + r * na);
      accumulate(pa, std::move(ga));
    }
    if (pb.requires_grad) {
      Tensor gb(pb.value.shape());
      for (std::int64_t r = 0; r < rows; ++r) std::copy_n(g + r * (na + nb) + na, nb, gb.ptr() + r * nb);
      accumulate(pb, std::move(gb));
    }
  });
}

Var gather_rows(const Var& x, std::vector<std::int64_t> indices) {
  const std::int64_t rows = x.shape().at(0);
  const std::int64_t stride = x.value().size() / rows;
  Shape s = x.shape();
  s[0] = static_cast<std::int64_t>(indices.size());
  Tensor y(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= rows)
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) + " outside axis 0 of " +
                           shape_str(x.shape()));
    std::copy_n(x.value().ptr() + indices[i] * stride, stride, y.ptr() + static_cast<std::int64_t>(i) * stride);
  }
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(indices));
  return make_node(std::move(y), {x}, [idx, stride](Node& self) {
    Node& px = *self.parents[0];
    Tensor gx(px.value.shape());
    const float* g = self.grad.ptr();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      float* dst = gx.ptr() + (*idx)[i] * stride;
      const float* src = g + static_cast<std::int64_t>(i) * stride;
      for (std::int64_t j = 0; j < stride; ++j) dst[j] += src[j];
    }
    accumulate(px, std::move(gx));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor y(a.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  return make_node(std::move(y), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) accumulate(*p, Tensor(self.grad));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor y(a.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  return make_node(std::move(y), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) accumulate(*self.parents[0], Tensor(self.grad));
    if (self.parents[1]->requires_grad) {
      Tensor g(self.grad);
      for (auto& v : g.data()) v = -v;
      accumulate(*self.parents[1], std::move(g));
    }
  });
}

Var scale(const Var& a, float s) {
  Tensor y(a.shape());
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * s;
  return make_node(std::move(y), {a}, [s](Node& self) {
    Tensor g(self.grad);
    for (auto& v : g.data()) v *= s;
    accumulate(*self.parents[0], std::move(g));
  });
}

Var l2_sq(const Var& a, const Var& b) {
  if (a.value().size() != b.value().size())
    throw DimensionError("l2_sq: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const float* pa = a.value().ptr();
  const float* pb = b.value().ptr();
  double s = 0.0;
  for (std::int64_t i = 0; i < a.value().size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    s += d * d;
  }
  return make_node(Tensor::scalar(static_cast<float>(s)), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const float g = self.grad[0];
    Tensor diff(na.value.shape());
    for (std::int64_t i = 0; i < diff.size(); ++i) diff[i] = 2.0f * g * (na.value[i] - nb.value[i]);
    if (nb.requires_grad) {
      Tensor gb(nb.value.shape());
      for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] = -diff[i];
      accumulate(nb, std::move(gb));
    }
    if (na.requires_grad) accumulate(na, std::move(diff));
  });
}

Var row_l2_sq(const Var& a, const Var& b) {
  require_same_shape(a, b, "row_l2_sq");
  const std::int64_t rows = a.shape().at(0);
  const std::int64_t stride = a.value().size() / rows;
  Tensor y(Shape{rows});
  for (std::int64_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::int64_t j = 0; j < stride; ++j) {
      const double d = static_cast<double>(a.value()[r * stride + j]) - b.value()[r * stride + j];
      s += d * d;
    }
    y[r] = static_cast<float>(s);
  }
  return make_node(std::move(y), {a, b}, [stride](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    Tensor diff(na.value.shape());
    for (std::int64_t i = 0; i < diff.size(); ++i)
      diff[i] = 2.0f * self.grad[i / stride] * (na.value[i] - nb.value[i]);
    if (nb.requires_grad) {
      Tensor gb(nb.value.shape());
      for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] = -diff[i];
      accumulate(nb, std::move(gb));
    }
    if (na.requires_grad) accumulate(na, std::move(diff));
  });
}

Var l1(const Var& a) {
  double s = 0.0;
  for (float v : a.value().data()) s += std::abs(static_cast<double>(v));
  return make_node(Tensor::scalar(static_cast<float>(s)), {a}, [](Node& self) {
    Node& na = *self.parents[0];
    Tensor g(na.value.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const float v = na.value[i];
      g[i] = v > 0.0f ? self.grad[0] : (v < 0.0f ? -self.grad[0] : 0.0f);
    }
    accumulate(na, std::move(g));
  });
}

Var categorical_cross_entropy(const Var& pred, const Var& target_onehot) {
  require_rank(pred, 2, "categorical_cross_entropy", "pred");
  require_same_shape(pred, target_onehot, "categorical_cross_entropy");
  constexpr float kEps = 1e-12f;
  const std::int64_t rows = pred.shape()[0];
  const float* p = pred.value().ptr();
  const float* t = target_onehot.value().ptr();
  double s = 0.0;
  for (std::int64_t i = 0; i < pred.value().size(); ++i)
    if (t[i] != 0.0f) s -= static_cast<double>(t[i]) * std::log(static_cast<double>(p[i]) + kEps);
  const float loss = static_cast<float>(s / static_cast<double>(rows));
  return make_node(Tensor::scalar(loss), {pred, target_onehot}, [rows](Node& self) {
    Node& np = *self.parents[0];
    Node& nt = *self.parents[1];
    const float g = self.grad[0] / static_cast<float>(rows);
    if (np.requires_grad) {
      Tensor gp(np.value.shape());
      for (std::int64_t i = 0; i < gp.size(); ++i) gp[i] = -g * nt.value[i] / (np.value[i] + kEps);
      accumulate(np, std::move(gp));
    }
    if (nt.requires_grad) {
      Tensor gt(nt.value.shape());
      for (std::int64_t i = 0; i < gt.size(); ++i) gt[i] = -g * std::log(np.value[i] + kEps);
      accumulate(nt, std::move(gt));
    }
  });
}

namespace {

// sign +1: Σ max(p_y − max_{i≠y} p_i, −κ); sign −1: Σ max(max_{i≠y} p_i − p_y, −κ).
Var hinge(const Var& probs, std::span<const int> labels, float kappa, float sign, const char* op) {
  require_rank(probs, 2, op, "probs");
  const std::int64_t rows = probs.shape()[0], k = probs.shape()[1];
  if (static_cast<std::int64_t>(labels.size()) != rows)
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  if (kappa < 0.0f) throw ConfigError(std::string(op) + ": kappa must be >= 0");
  // Per row: (label, runner-up, active?)
  auto picks = std::make_shared<std::vector<std::array<std::int64_t, 3>>>(static_cast<std::size_t>(rows));
  const float* p = probs.value().ptr();
  double total = 0.0;
  for (std::int64_t r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k)
      throw Error(std::string(op) + ": label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    std::int64_t other = y == 0 ? 1 : 0;
    for (std::int64_t i = 0; i < k; ++i)
      if (i != y && p[r * k + i] > p[r * k + other]) other = i;
    const float margin = sign * (p[r * k + y] - p[r * k + other]);
    const bool active = margin > -kappa;
    total += active ? margin : -kappa;
    (*picks)[static_cast<std::size_t>(r)] = {y, other, active ? 1 : 0};
  }
  return make_node(Tensor::scalar(static_cast<float>(total)), {probs}, [picks, k, sign](Node& self) {
    Node& np = *self.parents[0];
    Tensor g(np.value.shape());
    const float up = sign * self.grad[0];
    for (std::size_t r = 0; r < picks->size(); ++r) {
      const auto& [y, other, active] = (*picks)[r];
      if (!active) continue;
      const std::int64_t row = static_cast<std::int64_t>(r) * k;
      g[row + y] += up;
      g[row + other] -= up;
    }
    accumulate(np, std::move(g));
  });
}

}  // namespace

Var margin_hinge(const Var& probs, std::span<const int> labels, float kappa) {
  return hinge(probs, labels, kappa, 1.0f, "margin_hinge");
}

Var target_hinge(const Var& probs, std::span<const int> targets, float kappa) {
  return hinge(probs, targets, kappa, -1.0f, "target_hinge");
}

Var sum(const Var& a) {
  double s = 0.0;
  for (float v : a.value().data()) s += v;
  return make_node(Tensor::scalar(static_cast<float>(s)), {a}, [](Node& self) {
    Node& na = *self.parents[0];
    accumulate(na, Tensor(na.value.shape(), self.grad[0]));
  });
}

}  // namespace cfx::ops

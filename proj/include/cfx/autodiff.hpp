#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfx/tensor.hpp"

namespace cfx {

/// One value in a dynamically built computation graph. `backward` reads this
/// node's `grad` and adds into the grads of those parents that require one.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Zero-initialised grad buffer, allocated on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

/// Leaf that never receives a gradient.
Var constant(Tensor value);
/// Leaf that accumulates a gradient (e.g. an input being optimised directly).
Var variable(Tensor value);

/// Builds a node from a value, its parents, and its backward rule. The node
/// requires a gradient iff any parent does; otherwise the rule is dropped.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

struct AdamState {
  Tensor m;
  Tensor v;
  std::int64_t t = 0;
};

/// Trainable tensor with a frozen flag. While frozen it is excluded from
/// gradient accumulation and the optimiser leaves its bytes untouched.
class Parameter {
 public:
  Parameter(std::string name, Tensor init);

  const std::string& name() const noexcept { return name_; }
  const Var& var() const noexcept { return var_; }
  Tensor& value() noexcept { return var_.node()->value; }
  const Tensor& value() const noexcept { return var_.node()->value; }
  const Tensor& grad() const noexcept { return var_.node()->grad; }
  bool has_grad() const noexcept { return !var_.node()->grad.empty(); }
  void zero_grad() noexcept;

  bool frozen() const noexcept { return frozen_; }
  void set_frozen(bool frozen) noexcept;

  AdamState& adam() noexcept { return adam_; }
  const AdamState& adam() const noexcept { return adam_; }

 private:
  std::string name_;
  Var var_;
  bool frozen_ = false;
  AdamState adam_;
};

using ParameterPtr = std::shared_ptr<Parameter>;
using ParameterList = std::vector<ParameterPtr>;

/// Reverse pass from a one-element loss. Leaf gradients accumulate, so call
/// zero_grad between optimisation steps.
void backward(const Var& loss);

}  // namespace cfx

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "forest/numerics/tensor.hpp"

namespace forest::num {

struct Node;

/// Reverse-mode closure. Receives the node whose `grad` is complete and
/// accumulates into the grads of its parents.
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
  bool requires_grad = false;
  bool is_leaf = true;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

namespace detail {
bool& grad_mode_disabled() noexcept;
}

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_disabled()) { detail::grad_mode_disabled() = true; }
  ~NoGradGuard() { detail::grad_mode_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() noexcept { return !detail::grad_mode_disabled(); }

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const noexcept { return static_cast<bool>(node_); }

  /// Accumulated gradient; zeros of the value's shape when nothing was accumulated.
  Tensor grad() const;

  /// Backpropagates from this scalar. Intermediate nodes are released afterwards;
  /// leaf gradients accumulate across calls.
  void backward() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. Records `backward` only when grad mode is on and at least one
/// input requires a gradient. Throws NumericError if `value` has non-finite entries.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op_name);

/// Trainable tensor with a name.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  const std::string& name() const noexcept { return name_; }
  const Var& var() const noexcept { return var_; }
  const Tensor& value() const { return var_.value(); }
  Tensor& mutable_value() { return var_.node()->value; }
  Tensor grad() const { return var_.grad(); }
  Tensor& grad_buffer() { return var_.node()->grad_buffer(); }
  void zero_grad();

 private:
  std::string name_;
  Var var_;
};

}  // namespace forest::num

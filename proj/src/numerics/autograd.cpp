#include "forest/numerics/autograd.hpp"

#include <unordered_set>

namespace forest::num {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

namespace detail {
bool& grad_mode_disabled() noexcept {
  thread_local bool disabled = false;
  return disabled;
}
}  // namespace detail

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
  return node_->grad;
}

void Var::backward() const {
  if (node_->value.numel() != 1) {
    throw DimensionError("backward() needs a scalar, got " + shape_string(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS to get a topological order without deep recursion.
  // Shared ownership keeps parents alive while children release their edges.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(node_, 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      std::shared_ptr<Node> p = top.first->parents[top.second++];
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = it->get();
    if (n->backward && !n->grad.empty()) n->backward(*n);
    if (!n->is_leaf) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad = Tensor();
    }
  }
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op_name) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name) + " produced a non-finite value");
  }
  Var out(std::move(value));
  auto& node = *out.node();
  node.is_leaf = false;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (auto& in : inputs) node.parents.push_back(in.node());
  node.backward = std::move(backward);
  return out;
}

Parameter::Parameter(std::string name, Tensor value)
    : name_(std::move(name)), var_(std::move(value), true) {}

void Parameter::zero_grad() { var_.node()->grad = Tensor(var_.value().shape(), 0.0); }

}  // namespace forest::num

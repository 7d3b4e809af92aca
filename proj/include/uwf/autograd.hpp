#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "uwf/tensor.hpp"

// Minimal tape-free reverse-mode differentiation. Every op allocates a Node
// that owns its value and, while gradients are enabled, a closure that pushes
// the output gradient into its parents.
namespace uwf::ag {

inline thread_local bool grad_mode = true;

class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode) { grad_mode = false; }
  ~NoGradGuard() { grad_mode = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<void(const Tensor<T>& gout, const std::vector<Node*>& parents)>;

  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && value.size() > 0) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }
  T item() const { return node_->value[0]; }
  Node<T>* raw() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> t) {
  return Var<T>(std::move(t), false);
}

// Builds the result node of an op. Parents and the closure are retained only
// when some input needs a gradient and grad mode is on.
template <typename T>
Var<T> make_result(Tensor<T> value, const std::vector<Var<T>>& inputs, typename Node<T>::BackwardFn fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->leaf = false;
  bool needs = false;
  if (grad_mode)
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& in : inputs) n->parents.push_back(in.node());
    n->backward = std::move(fn);
  }
  return Var<T>(std::move(n));
}

template <typename T>
inline bool wants(const Node<T>* n) {
  return n->requires_grad;
}

// Accumulates d(root)/d(leaf) into every reachable leaf that requires a
// gradient. root must be a scalar. Intermediate gradients are released.
template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.raw(), 0);
  seen.insert(root.raw());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !p->leaf && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.raw()->grad_buffer()[0] += T(1);
  std::vector<Node<T>*> parents;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    parents.clear();
    for (auto& p : n->parents) parents.push_back(p.get());
    n->backward(n->grad, parents);
    n->grad = Tensor<T>();
  }
}

}  // namespace uwf::ag

#include "ctn/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace ctn {

Tensor& Node::ensure_grad() {
  if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  return grad;
}

void Node::zero_grad() {
  if (grad.numel()) grad.fill(0.0);
}

Var make_leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void backward(const Var& root) {
  if (root->value.numel() != 1) throw std::invalid_argument("backward() needs a scalar root");

  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n != root.get()) n->zero_grad();
  }
  root->ensure_grad();
  root->grad.fill(1.0);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace ctn

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ctn/tensor.hpp"

namespace ctn {

struct Node;
using Var = std::shared_ptr<Node>;

/// One value in the computation graph. Gradients accumulate into `grad`,
/// which is allocated on first use and kept across steps for leaves.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  Tensor& ensure_grad();
  void zero_grad();
};

Var make_leaf(Tensor value, bool requires_grad = false);
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

/// Reverse-mode sweep from a scalar root (seeds d(root)/d(root) = 1).
void backward(const Var& root);

}  // namespace ctn

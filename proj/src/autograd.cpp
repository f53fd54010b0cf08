// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "sonarseg/autograd.hpp"

#include <unordered_set>
#include <utility>

namespace sonarseg {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed) {
  if (!root->requires_grad) return;
  if (seed) {
    if (seed->shape() != root->value.shape()) throw std::invalid_argument("backward seed shape mismatch");
    root->grad = *seed;
  } else {
    if (root->value.numel() != 1) throw std::invalid_argument("backward needs a scalar root or a seed");
    root->grad_buffer()[0] += T{1};
  }

  // Iterative post-order DFS gives a topological order (parents first).
  // The order owns its nodes so that releasing a node's parent list does not
  // free nodes still waiting in the sweep.
  std::vector<Var<T>> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Var<T>, std::size_t>> stack{{root, 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      Var<T> p = top.first->parents[top.second++];
      if (p->requires_grad && visited.insert(p.get()).second) stack.emplace_back(std::move(p), 0);
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& node = **it;
    if (node.backward_fn) {
      if (!node.grad.empty()) node.backward_fn(node);
      node.backward_fn = nullptr;
      node.parents.clear();
      node.grad = Tensor<T>();
    }
    it->reset();
  }
}

template void backward(const Var<float>&, const Tensor<float>*);
template void backward(const Var<double>&, const Tensor<double>*);

}  // namespace sonarseg

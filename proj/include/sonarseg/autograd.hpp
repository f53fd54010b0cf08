// SPDX-FileCopyrightText: (c) 2026 The sonarseg Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sonarseg/tensor.hpp"

namespace sonarseg {

// A node of the reverse-mode graph. Leaves are parameters or constants;
// interior nodes carry the closure that pushes their gradient to parents.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  // Zero-initialized on first touch.
  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> leaf(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

bool grad_enabled();

// Disables graph recording for the lifetime of the guard (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds the output node of an op. When no input needs a gradient (or
// recording is off) the parents and closure are dropped.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (!grad_enabled()) return n;
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (!any) return n;
  n->requires_grad = true;
  n->parents = std::move(parents);
  n->backward_fn = std::move(backward_fn);
  return n;
}

// Seeds d(root)/d(root) = 1 (root must be a scalar unless `seed` is given)
// and accumulates gradients into every reachable leaf. Interior gradients
// and closures are released as the sweep proceeds.
template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr);

// Named trainable tensor.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParameterList = std::vector<Parameter<T>>;

}  // namespace sonarseg

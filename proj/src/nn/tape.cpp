// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/nn/tape.hpp"

#include <stdexcept>

namespace molfm::nn {

template <typename T>
Var<T> Tape<T>::Push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::Constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return Push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::Variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return Push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::Param(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  Node n;
  n.value = p.value;
  n.needs_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  Var<T> v = Push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::Record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardFn backward) {
  return Record(std::move(value), std::vector<Var<T>>(inputs),
                std::move(backward));
}

template <typename T>
Var<T> Tape<T>::Record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                       BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var<T>& in : inputs) {
    if (&in.tape() != this) {
      throw std::invalid_argument("op mixes vars from different tapes");
    }
    n.needs_grad = n.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(backward);
  return Push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::GradRef(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>* Tape<T>::Grad(Var<T> v) const {
  const Node& n = nodes_[v.id()];
  return n.has_grad ? &n.grad : nullptr;
}

template <typename T>
void Tape<T>::Backward(Var<T> root) {
  if (&root.tape() != this) {
    throw std::invalid_argument("backward root belongs to another tape");
  }
  GradRef(root.id()).Fill(T{1});
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.needs_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      Parameter<T>& p = *n.param;
      if (p.grad.size() != p.value.size()) p.ZeroGrad();
      for (std::size_t j = 0; j < n.grad.size(); ++j) p.grad[j] += n.grad[j];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace molfm::nn

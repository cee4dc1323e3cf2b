// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "molfm/nn/parameter.hpp"
#include "molfm/nn/tensor.hpp"

namespace molfm::nn {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor<T>& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Wengert list. Nodes are appended in evaluation order, so reverse iteration
// is a valid topological order for the backward sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> Constant(Tensor<T> value);
  // Leaf whose gradient is kept on the tape (see Grad()).
  Var<T> Variable(Tensor<T> value);
  // Leaf bound to a parameter; Backward() accumulates into p.grad. Reusing a
  // parameter returns the same node.
  Var<T> Param(Parameter<T>& p);

  Var<T> Record(Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardFn backward);
  Var<T> Record(Tensor<T> value, const std::vector<Var<T>>& inputs,
                BackwardFn backward);

  // Seeds the root with ones and sweeps every node once in reverse order.
  void Backward(Var<T> root);

  const Tensor<T>& Value(std::size_t id) const { return nodes_[id].value; }
  bool NeedsGrad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool NeedsGrad(Var<T> v) const { return nodes_[v.id()].needs_grad; }
  // Zero-initialized on first use.
  Tensor<T>& GradRef(std::size_t id);
  // nullptr when no gradient reached the node.
  const Tensor<T>* Grad(Var<T> v) const;

  std::size_t size() const { return nodes_.size(); }

  // Piecewise-linear ops fold their active pattern into this signature when
  // tracking is on; the gradient checker uses it to skip coordinates whose
  // finite-difference stencil straddles a kink.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool track_kinks() const { return track_kinks_; }
  void MixKinkSignature(std::uint64_t bits) {
    kink_signature_ = (kink_signature_ ^ bits) * 1099511628211ull;
  }
  std::uint64_t kink_signature() const { return kink_signature_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool needs_grad = false;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  Var<T> Push(Node node);

  std::deque<Node> nodes_;  // stable references across push_back
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  bool track_kinks_ = false;
  std::uint64_t kink_signature_ = 14695981039346656037ull;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->Value(id_);
}

}  // namespace molfm::nn

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "molfm/nn/rng.hpp"
#include "molfm/nn/tensor.hpp"

namespace molfm::nn {

// A named tensor owned by a ParameterStore. Non-trainable entries are
// buffers (batch-norm running statistics) that are checkpointed but never
// touched by the optimizer.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;

  void ZeroGrad() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    grad.Fill(T{0});
  }
};

template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  // Throws on duplicate names.
  Parameter<T>& Add(std::string name, Shape shape, bool trainable = true);

  Parameter<T>* Find(std::string_view name);
  const Parameter<T>* Find(std::string_view name) const;
  Parameter<T>& At(std::string_view name);

  std::size_t size() const { return entries_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *entries_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *entries_[i]; }

  // Number of trainable scalars.
  std::size_t NumTrainable() const;
  void ZeroGrad();

  std::vector<Tensor<T>> Snapshot() const;
  void Restore(const std::vector<Tensor<T>>& values);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> entries_;
};

// Xavier/Glorot uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
void XavierUniform(Parameter<T>& p, std::size_t fan_in, std::size_t fan_out,
                   Rng& rng);

}  // namespace molfm::nn

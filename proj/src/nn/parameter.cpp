// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/nn/parameter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molfm::nn {

template <typename T>
Parameter<T>& ParameterStore<T>::Add(std::string name, Shape shape,
                                     bool trainable) {
  if (Find(name) != nullptr) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  auto p = std::make_unique<Parameter<T>>();
  p->name = std::move(name);
  p->value = Tensor<T>(std::move(shape));
  p->trainable = trainable;
  entries_.push_back(std::move(p));
  return *entries_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::Find(std::string_view name) {
  for (auto& p : entries_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
const Parameter<T>* ParameterStore<T>::Find(std::string_view name) const {
  for (const auto& p : entries_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
Parameter<T>& ParameterStore<T>::At(std::string_view name) {
  Parameter<T>* p = Find(name);
  if (p == nullptr) {
    throw std::out_of_range("no parameter named " + std::string(name));
  }
  return *p;
}

template <typename T>
std::size_t ParameterStore<T>::NumTrainable() const {
  std::size_t n = 0;
  for (const auto& p : entries_) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

template <typename T>
void ParameterStore<T>::ZeroGrad() {
  for (auto& p : entries_) {
    if (p->trainable) p->ZeroGrad();
  }
}

template <typename T>
std::vector<Tensor<T>> ParameterStore<T>::Snapshot() const {
  std::vector<Tensor<T>> out;
  out.reserve(entries_.size());
  for (const auto& p : entries_) out.push_back(p->value);
  return out;
}

template <typename T>
void ParameterStore<T>::Restore(const std::vector<Tensor<T>>& values) {
  if (values.size() != entries_.size()) {
    throw std::invalid_argument("snapshot size mismatch");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    entries_[i]->value = values[i];
  }
}

template <typename T>
void XavierUniform(Parameter<T>& p, std::size_t fan_in, std::size_t fan_out,
                   Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in + fan_out, 1)));
  for (auto& x : p.value.values()) {
    x = static_cast<T>(UniformRange(rng, -limit, limit));
  }
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template void XavierUniform(Parameter<float>&, std::size_t, std::size_t, Rng&);
template void XavierUniform(Parameter<double>&, std::size_t, std::size_t, Rng&);

}  // namespace molfm::nn

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/nn/layers.hpp"

#include <stdexcept>

namespace molfm::nn {

template <typename T>
Var<T> ApplyDropout(Var<T> x, double p, const ForwardMode& mode) {
  if (!mode.dropout || p == 0.0) return x;
  if (mode.rng == nullptr) throw std::invalid_argument("dropout: active mode without rng");
  return Dropout(x, p, *mode.rng, true);
}

template <typename T>
Linear<T>::Linear(ParameterStore<T>& store, const std::string& name,
                  std::size_t in, std::size_t out, Rng& rng, bool bias)
    : in_(in), out_(out) {
  weight_ = &store.Add(name + ".weight", {in, out});
  XavierUniform(*weight_, in, out, rng);
  if (bias) bias_ = &store.Add(name + ".bias", {out});
}

template <typename T>
Var<T> Linear<T>::operator()(Tape<T>& tape, Var<T> x) const {
  Var<T> y = MatMul(x, tape.Param(*weight_));
  return bias_ ? AddRow(y, tape.Param(*bias_)) : y;
}

template <typename T>
LayerNormLayer<T>::LayerNormLayer(ParameterStore<T>& store,
                                  const std::string& name,
                                  std::size_t features) {
  gain_ = &store.Add(name + ".gain", {features});
  gain_->value.Fill(T{1});
  bias_ = &store.Add(name + ".bias", {features});
}

template <typename T>
Var<T> LayerNormLayer<T>::operator()(Tape<T>& tape, Var<T> x) const {
  return LayerNorm(x, tape.Param(*gain_), tape.Param(*bias_));
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(ParameterStore<T>& store,
                                  const std::string& name,
                                  std::size_t features, double momentum)
    : momentum_(momentum) {
  if (features == 0) throw std::invalid_argument("batch_norm: zero-size feature dim");
  gain_ = &store.Add(name + ".gain", {features});
  gain_->value.Fill(T{1});
  bias_ = &store.Add(name + ".bias", {features});
  running_mean_ = &store.Add(name + ".running_mean", {features}, false);
  running_var_ = &store.Add(name + ".running_var", {features}, false);
  running_var_->value.Fill(T{1});
}

template <typename T>
Var<T> BatchNormLayer<T>::operator()(Tape<T>& tape, Var<T> x,
                                     const ForwardMode& mode) const {
  constexpr double kEps = 1e-5;
  if (!mode.train) {
    return BatchNormEval(x, tape.Param(*gain_), tape.Param(*bias_),
                         running_mean_->value, running_var_->value, kEps);
  }
  std::vector<T> mean, var;
  Var<T> y = BatchNormTrain(x, tape.Param(*gain_), tape.Param(*bias_), kEps,
                            &mean, &var);
  const std::size_t m = x.rows();
  const T mom = static_cast<T>(momentum_);
  const T unbias = m > 1 ? static_cast<T>(m) / static_cast<T>(m - 1) : T{1};
  for (std::size_t c = 0; c < mean.size(); ++c) {
    running_mean_->value[c] = (T{1} - mom) * running_mean_->value[c] + mom * mean[c];
    running_var_->value[c] =
        (T{1} - mom) * running_var_->value[c] + mom * var[c] * unbias;
  }
  return y;
}

template <typename T>
Embedding<T>::Embedding(ParameterStore<T>& store, const std::string& name,
                        std::size_t vocab, std::size_t dim, Rng& rng) {
  table_ = &store.Add(name + ".table", {vocab, dim});
  XavierUniform(*table_, vocab, dim, rng);
}

template <typename T>
Var<T> Embedding<T>::operator()(Tape<T>& tape,
                                std::span<const std::size_t> ids) const {
  return GatherRows(tape.Param(*table_), ids);
}

template Var<float> ApplyDropout(Var<float>, double, const ForwardMode&);
template Var<double> ApplyDropout(Var<double>, double, const ForwardMode&);
template class Linear<float>;
template class Linear<double>;
template class LayerNormLayer<float>;
template class LayerNormLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class Embedding<float>;
template class Embedding<double>;

}  // namespace molfm::nn

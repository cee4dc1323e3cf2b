// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include "molfm/nn/ops.hpp"
#include "molfm/nn/parameter.hpp"
#include "molfm/nn/rng.hpp"

namespace molfm::nn {

// Per-forward switches shared by every layer.
struct ForwardMode {
  bool train = false;    // batch norm uses batch statistics and updates buffers
  bool dropout = false;  // dropout masks are sampled (train or MC inference)
  Rng* rng = nullptr;    // required when dropout is on
};

// Dropout driven by mode.dropout / mode.rng; throws if active without rng.
template <typename T>
Var<T> ApplyDropout(Var<T> x, double p, const ForwardMode& mode);

template <typename T>
class Linear {
 public:
  Linear() = default;
  // Weight is in x out (Xavier uniform), bias zero.
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in,
         std::size_t out, Rng& rng, bool bias = true);

  Var<T> operator()(Tape<T>& tape, Var<T> x) const;

  Parameter<T>& weight() const { return *weight_; }
  Parameter<T>* bias() const { return bias_; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

 private:
  Parameter<T>* weight_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
};

template <typename T>
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  LayerNormLayer(ParameterStore<T>& store, const std::string& name,
                 std::size_t features);
  Var<T> operator()(Tape<T>& tape, Var<T> x) const;

 private:
  Parameter<T>* gain_ = nullptr;
  Parameter<T>* bias_ = nullptr;
};

// Running statistics follow mean <- (1 - momentum) mean + momentum batch_mean,
// with the unbiased batch variance, as in the usual framework convention.
template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParameterStore<T>& store, const std::string& name,
                 std::size_t features, double momentum = 0.1);
  Var<T> operator()(Tape<T>& tape, Var<T> x, const ForwardMode& mode) const;

 private:
  Parameter<T>* gain_ = nullptr;
  Parameter<T>* bias_ = nullptr;
  Parameter<T>* running_mean_ = nullptr;
  Parameter<T>* running_var_ = nullptr;
  double momentum_ = 0.1;
};

template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(ParameterStore<T>& store, const std::string& name,
            std::size_t vocab, std::size_t dim, Rng& rng);
  Var<T> operator()(Tape<T>& tape, std::span<const std::size_t> ids) const;

 private:
  Parameter<T>* table_ = nullptr;
};

}  // namespace molfm::nn

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "molfm/nn/parameter.hpp"

namespace molfm::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct Moments {
  std::vector<T> first;
  std::vector<T> second;
};

// One AdamW update with decoupled weight decay: the decay term lr * wd * p is
// applied to the weights directly and never enters the moment estimates.
// `step` is the 1-based step count used for bias correction.
template <typename T>
void AdamWStep(std::span<T> param, std::span<const T> grad, Moments<T>& state,
               const AdamWConfig& cfg, double lr, std::size_t step);

// Optimizer state for every trainable entry of a store, in store order.
template <typename T>
class AdamW {
 public:
  AdamW(ParameterStore<T>& store, AdamWConfig cfg);

  // Applies one step using each parameter's accumulated grad.
  void Step(double lr);
  std::size_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  const Moments<T>& moments(std::size_t param_index) const { return state_[param_index]; }

 private:
  ParameterStore<T>* store_;
  AdamWConfig cfg_;
  std::vector<Moments<T>> state_;
  std::size_t step_ = 0;
};

struct WarmupCosine {
  double base_lr = 1e-4;
  std::size_t warmup_steps = 1000;
  std::size_t total_steps = 1;
};

// SGDR-style cycles measured in (fractional) epochs.
struct CosineWarmRestarts {
  double base_lr = 5e-5;
  double t0_epochs = 10.0;
  double t_mult = 2.0;
  double min_lr = 0.0;
};

using LRSchedule = std::variant<WarmupCosine, CosineWarmRestarts>;

// `position` is the optimizer step for WarmupCosine and the epoch (possibly
// fractional) for CosineWarmRestarts.
double LearningRateAt(const LRSchedule& schedule, double position);

}  // namespace molfm::nn

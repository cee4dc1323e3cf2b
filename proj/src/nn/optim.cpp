// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/nn/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace molfm::nn {

template <typename T>
void AdamWStep(std::span<T> param, std::span<const T> grad, Moments<T>& state,
               const AdamWConfig& cfg, double lr, std::size_t step) {
  if (param.size() != grad.size()) {
    throw std::invalid_argument("adamw: parameter/gradient size mismatch");
  }
  if (step == 0) throw std::invalid_argument("adamw: step count is 1-based");
  if (state.first.size() != param.size()) {
    state.first.assign(param.size(), T{0});
    state.second.assign(param.size(), T{0});
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T decay = static_cast<T>(lr * cfg.weight_decay);
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= decay * param[i];
    const T g = grad[i];
    state.first[i] = b1 * state.first[i] + (T{1} - b1) * g;
    state.second[i] = b2 * state.second[i] + (T{1} - b2) * g * g;
    const double m_hat = static_cast<double>(state.first[i]) / bc1;
    const double v_hat = static_cast<double>(state.second[i]) / bc2;
    param[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

template <typename T>
AdamW<T>::AdamW(ParameterStore<T>& store, AdamWConfig cfg)
    : store_(&store), cfg_(cfg), state_(store.size()) {}

template <typename T>
void AdamW<T>::Step(double lr) {
  ++step_;
  for (std::size_t i = 0; i < store_->size(); ++i) {
    Parameter<T>& p = (*store_)[i];
    if (!p.trainable) continue;
    if (p.grad.size() != p.value.size()) p.ZeroGrad();
    AdamWStep<T>(p.value.values(), p.grad.values(), state_[i], cfg_, lr, step_);
  }
}

namespace {

double Cosine(double base, double floor, double fraction) {
  return floor + (base - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * fraction));
}

struct LrVisitor {
  double position;

  double operator()(const WarmupCosine& s) const {
    const double step = std::max(position, 0.0);
    const double warm = static_cast<double>(s.warmup_steps);
    if (step < warm) return s.base_lr * step / warm;
    const double span = static_cast<double>(s.total_steps) - warm;
    if (span <= 0.0) return 0.0;
    return Cosine(s.base_lr, 0.0, std::min((step - warm) / span, 1.0));
  }

  double operator()(const CosineWarmRestarts& s) const {
    double epoch = std::max(position, 0.0);
    double cycle = s.t0_epochs;
    if (s.t_mult == 1.0) {
      epoch = std::fmod(epoch, cycle);
    } else {
      while (epoch >= cycle) {
        epoch -= cycle;
        cycle *= s.t_mult;
      }
    }
    return Cosine(s.base_lr, s.min_lr, epoch / cycle);
  }
};

}  // namespace

double LearningRateAt(const LRSchedule& schedule, double position) {
  return std::visit(LrVisitor{position}, schedule);
}

template void AdamWStep(std::span<float>, std::span<const float>, Moments<float>&,
                        const AdamWConfig&, double, std::size_t);
template void AdamWStep(std::span<double>, std::span<const double>, Moments<double>&,
                        const AdamWConfig&, double, std::size_t);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace molfm::nn

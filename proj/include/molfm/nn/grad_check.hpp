// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "molfm/nn/tape.hpp"

namespace molfm::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Coordinates whose +/- eps evaluations crossed a ReLU kink; the central
  // difference is not a derivative there, so they are excluded.
  std::size_t skipped = 0;
  std::string worst;  // "<name>[index]" of the worst coordinate
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// |a - b| / max(|a|, |b|, 1e-8).
double RelativeError(double a, double b);

using ScalarOfInput = std::function<Var<double>(Tape<double>&, Var<double>)>;
using ScalarOfParams = std::function<Var<double>(Tape<double>&)>;

// Compares the tape gradient of f at x with central differences
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). Throws if f is not scalar.
GradCheckResult GradCheck(const ScalarOfInput& f, const Tensor<double>& x,
                          double eps = 1e-6);

// Same check over every trainable parameter of `store`. f must rebuild the
// whole computation (including any rng) deterministically on each call.
// max_per_param > 0 checks an evenly strided subset of each tensor.
GradCheckResult GradCheckParameters(ParameterStore<double>& store,
                                    const ScalarOfParams& f,
                                    double eps = 1e-6,
                                    std::size_t max_per_param = 0);

}  // namespace molfm::nn

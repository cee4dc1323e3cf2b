// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace molfm::nn {
namespace {

struct Eval {
  double value;
  std::uint64_t kinks;
};

template <typename Build>
Eval Evaluate(const Build& build) {
  Tape<double> tape;
  tape.set_track_kinks(true);
  Var<double> out = build(tape);
  if (out.value().size() != 1) {
    throw std::invalid_argument("grad_check: function output is not scalar (shape " +
                                ShapeString(out.value().shape()) + ")");
  }
  return {out.value()[0], tape.kink_signature()};
}

void Accumulate(GradCheckResult& r, double analytic, double numeric,
                const std::string& label) {
  ++r.coordinates;
  const double err = RelativeError(analytic, numeric);
  if (r.worst.empty() || err > r.max_rel_error) {
    r.max_rel_error = err;
    r.worst = label;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
}

}  // namespace

double RelativeError(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

GradCheckResult GradCheck(const ScalarOfInput& f, const Tensor<double>& x,
                          double eps) {
  Tensor<double> analytic(x.shape());
  std::uint64_t base_kinks = 0;
  {
    Tape<double> tape;
    tape.set_track_kinks(true);
    Var<double> in = tape.Variable(x);
    Var<double> out = f(tape, in);
    if (out.value().size() != 1) {
      throw std::invalid_argument("grad_check: function output is not scalar (shape " +
                                  ShapeString(out.value().shape()) + ")");
    }
    base_kinks = tape.kink_signature();
    tape.Backward(out);
    if (const Tensor<double>* g = tape.Grad(in)) analytic = *g;
  }
  GradCheckResult result;
  Tensor<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const Eval plus = Evaluate([&](Tape<double>& t) { return f(t, t.Variable(probe)); });
    probe[i] = orig - eps;
    const Eval minus = Evaluate([&](Tape<double>& t) { return f(t, t.Variable(probe)); });
    probe[i] = orig;
    if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
      ++result.skipped;
      continue;
    }
    Accumulate(result, analytic[i], (plus.value - minus.value) / (2.0 * eps),
               "x[" + std::to_string(i) + "]");
  }
  return result;
}

GradCheckResult GradCheckParameters(ParameterStore<double>& store,
                                    const ScalarOfParams& f, double eps,
                                    std::size_t max_per_param) {
  store.ZeroGrad();
  std::uint64_t base_kinks = 0;
  {
    Tape<double> tape;
    tape.set_track_kinks(true);
    Var<double> out = f(tape);
    if (out.value().size() != 1) {
      throw std::invalid_argument("grad_check: function output is not scalar");
    }
    base_kinks = tape.kink_signature();
    tape.Backward(out);
  }
  GradCheckResult result;
  for (std::size_t p = 0; p < store.size(); ++p) {
    Parameter<double>& param = store[p];
    if (!param.trainable) continue;
    const Tensor<double> analytic = param.grad;
    const std::size_t n = param.value.size();
    const std::size_t stride =
        (max_per_param > 0 && n > max_per_param) ? (n + max_per_param - 1) / max_per_param : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = param.value[i];
      param.value[i] = orig + eps;
      const Eval plus = Evaluate(f);
      param.value[i] = orig - eps;
      const Eval minus = Evaluate(f);
      param.value[i] = orig;
      if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
        ++result.skipped;
        continue;
      }
      Accumulate(result, analytic[i], (plus.value - minus.value) / (2.0 * eps),
                 param.name + "[" + std::to_string(i) + "]");
    }
  }
  return result;
}

}  // namespace molfm::nn

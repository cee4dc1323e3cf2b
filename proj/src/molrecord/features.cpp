// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/molrecord/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace molfm::molrecord {

namespace {

constexpr std::string_view kElements[kElementClasses] = {
    "C", "N", "O", "S", "F", "Cl", "Br", "I", "P", "B", "Si", "Se", "H", "Na", "K", "OTHER"};

std::size_t Bucket(int value, int lo, int hi) {
  return static_cast<std::size_t>(std::clamp(value, lo, hi) - lo);
}

void CheckInputs(std::span<const double> energies, double temperature) {
  if (energies.empty()) throw std::invalid_argument("boltzmann: empty energy list");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("boltzmann: temperature must be positive");
  }
  for (double e : energies) {
    if (!std::isfinite(e)) throw std::invalid_argument("boltzmann: non-finite energy");
  }
}

}  // namespace

std::size_t ElementClass(std::string_view element) {
  for (std::size_t i = 0; i + 1 < kElementClasses; ++i) {
    if (kElements[i] == element) return i;
  }
  return kElementClasses - 1;
}

std::string_view ElementClassName(std::size_t cls) {
  return cls < kElementClasses ? kElements[cls] : kElements[kElementClasses - 1];
}

AtomFeatures ComputeAtomFeatures(const AtomSpec& atom) {
  AtomFeatures f{};
  f[kElementOffset + ElementClass(atom.element)] = 1.0;
  f[kDegreeOffset + Bucket(atom.degree, 0, 5)] = 1.0;
  f[kChargeOffset + Bucket(atom.formal_charge, -2, 2)] = 1.0;
  f[kNumHOffset + Bucket(atom.num_h, 0, 4)] = 1.0;
  f[kHybridOffset + static_cast<std::size_t>(atom.hybridization)] = 1.0;
  return f;
}

std::vector<double> LogBoltzmannWeights(std::span<const double> energies, double temperature) {
  CheckInputs(energies, temperature);
  const double rt = kGasConstantKcal * temperature;
  const double e_min = *std::min_element(energies.begin(), energies.end());
  std::vector<double> out(energies.size());
  double z = 0.0;
  for (std::size_t k = 0; k < energies.size(); ++k) {
    out[k] = -(energies[k] - e_min) / rt;
    z += std::exp(out[k]);
  }
  const double log_z = std::log(z);
  for (double& v : out) v -= log_z;
  return out;
}

std::vector<double> BoltzmannWeights(std::span<const double> energies, double temperature) {
  std::vector<double> w = LogBoltzmannWeights(energies, temperature);
  double total = 0.0;
  for (double& v : w) {
    v = std::exp(v);
    total += v;
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace molfm::molrecord

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace molfm::nn {

// The standard distributions are implementation-defined; these helpers only
// depend on the raw mt19937_64 stream, so seeded runs reproduce across
// standard libraries.
using Rng = std::mt19937_64;

inline double Uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double UniformRange(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * Uniform01(rng);
}

// Uniform integer in [0, n).
inline std::size_t UniformIndex(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(Uniform01(rng) * static_cast<double>(n)) %
         (n == 0 ? 1 : n);
}

inline double StandardNormal(Rng& rng) {
  // Box-Muller.
  double u1 = Uniform01(rng);
  while (u1 <= 0.0) u1 = Uniform01(rng);
  const double u2 = Uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename V>
void Shuffle(V& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[UniformIndex(rng, i)]);
  }
}

// Independent stream for (seed, stream index), e.g. one per MC-dropout pass.
inline Rng DeriveRng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x6d6f6c66u};
  return Rng(seq);
}

}  // namespace molfm::nn

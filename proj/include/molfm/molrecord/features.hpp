// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "molfm/molrecord/record.hpp"

namespace molfm::molrecord {

// Block layout of the atom feature vector:
//   [0, 16)  element  C N O S F Cl Br I P B Si Se H Na K OTHER
//   [16, 22) degree   0..4, >=5
//   [22, 27) charge   -2..+2
//   [27, 32) num_h    0..3, >=4
//   [32, 38) hybrid   S SP SP2 SP3 SP3D OTHER
inline constexpr std::size_t kElementClasses = 16;
inline constexpr std::size_t kAtomFeatureDim = 38;
inline constexpr std::size_t kElementOffset = 0;
inline constexpr std::size_t kDegreeOffset = 16;
inline constexpr std::size_t kChargeOffset = 22;
inline constexpr std::size_t kNumHOffset = 27;
inline constexpr std::size_t kHybridOffset = 32;

using AtomFeatures = std::array<double, kAtomFeatureDim>;

// 0..15, where 15 is OTHER.
std::size_t ElementClass(std::string_view element);
std::string_view ElementClassName(std::size_t cls);

// Five one-hot blocks; out-of-range values clamp to the nearest bucket.
AtomFeatures ComputeAtomFeatures(const AtomSpec& atom);

// p_k proportional to exp(-E_k / RT), RT = 0.0019872 * T kcal/mol.
// Throws std::invalid_argument on an empty list, non-finite energy or T <= 0.
inline constexpr double kGasConstantKcal = 0.0019872;
std::vector<double> BoltzmannWeights(std::span<const double> energies,
                                     double temperature = 298.0);
// log of the normalized weights, computed without exponentiating first.
std::vector<double> LogBoltzmannWeights(std::span<const double> energies,
                                        double temperature = 298.0);

}  // namespace molfm::molrecord

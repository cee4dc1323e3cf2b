// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "molfm/molrecord/record.hpp"

namespace molfm::pipeline {

// Radius of gyration (unweighted), Angstrom.
double RadiusOfGyration(const std::vector<molrecord::Coord>& coords);

inline constexpr double kSyntheticRgThreshold = 2.0;

struct SyntheticConfig {
  std::size_t topologies = 16;
  std::size_t conformers = 3;
  std::size_t min_atoms = 5;
  std::size_t max_atoms = 9;
  double compact_rg = 1.2;
  double extended_rg = 3.0;
  double energy_spread = 2.0;  // energies uniform in [0, spread] kcal/mol
  std::uint64_t seed = 7;
};

// Each topology (random tree over C/N/O with a matching SELFIES string)
// appears twice with identical SELFIES, atoms and bonds: once with compact
// conformers and once with extended ones. The label is 1 exactly when the
// mean radius of gyration over conformers exceeds kSyntheticRgThreshold, so
// only geometry separates the two copies. Twins share a scaffold key.
std::vector<molrecord::MoleculeRecord> SyntheticGeometricDataset(const SyntheticConfig& cfg = {});

}  // namespace molfm::pipeline

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/synthetic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "molfm/nn/rng.hpp"

namespace molfm::pipeline {

double RadiusOfGyration(const std::vector<molrecord::Coord>& coords) {
  if (coords.empty()) throw std::invalid_argument("radius of gyration: no atoms");
  molrecord::Coord c{0, 0, 0};
  for (const auto& x : coords) {
    for (int d = 0; d < 3; ++d) c[d] += x[d];
  }
  for (double& v : c) v /= static_cast<double>(coords.size());
  double s = 0.0;
  for (const auto& x : coords) {
    for (int d = 0; d < 3; ++d) s += (x[d] - c[d]) * (x[d] - c[d]);
  }
  return std::sqrt(s / static_cast<double>(coords.size()));
}

namespace {

struct Element {
  const char* symbol;
  const char* token;
  int valence;
};

constexpr Element kElements[] = {{"C", "[C]", 4}, {"N", "[N]", 3}, {"O", "[O]", 2}};

// Centred and scaled to radius of gyration `rg`.
std::vector<molrecord::Coord> ScaleTo(std::vector<molrecord::Coord> xyz, double rg) {
  const double now = RadiusOfGyration(xyz);
  molrecord::Coord c{0, 0, 0};
  for (const auto& x : xyz) {
    for (int d = 0; d < 3; ++d) c[d] += x[d] / static_cast<double>(xyz.size());
  }
  for (auto& x : xyz) {
    for (int d = 0; d < 3; ++d) x[d] = (x[d] - c[d]) * rg / now;
  }
  return xyz;
}

}  // namespace

std::vector<molrecord::MoleculeRecord> SyntheticGeometricDataset(const SyntheticConfig& cfg) {
  if (cfg.topologies == 0 || cfg.conformers == 0 || cfg.min_atoms < 2 || cfg.max_atoms < cfg.min_atoms) {
    throw std::invalid_argument("synthetic dataset: bad configuration");
  }
  if (!(cfg.compact_rg < kSyntheticRgThreshold && cfg.extended_rg > kSyntheticRgThreshold)) {
    throw std::invalid_argument("synthetic dataset: radii must straddle the threshold");
  }
  nn::Rng rng(cfg.seed);
  std::vector<molrecord::MoleculeRecord> out;
  for (std::size_t t = 0; t < cfg.topologies; ++t) {
    const std::size_t n = cfg.min_atoms + nn::UniformIndex(rng, cfg.max_atoms - cfg.min_atoms + 1);
    molrecord::MoleculeRecord base;
    std::vector<const Element*> elems(n);
    std::vector<int> degree(n, 0);
    for (std::size_t a = 0; a < n; ++a) {
      elems[a] = &kElements[a == 0 ? 0 : nn::UniformIndex(rng, 3)];
      base.selfies += elems[a]->token;
    }
    for (std::size_t a = 1; a < n; ++a) {
      // Attach to an earlier atom with free valence; atom 0 is carbon.
      std::size_t parent = nn::UniformIndex(rng, a);
      while (degree[parent] >= elems[parent]->valence) parent = (parent + 1) % a;
      base.bonds.push_back({parent, a, molrecord::BondOrder::kSingle});
      ++degree[parent];
      ++degree[a];
    }
    for (std::size_t a = 0; a < n; ++a) {
      molrecord::AtomSpec s;
      s.element = elems[a]->symbol;
      s.degree = degree[a];
      s.num_h = std::max(0, elems[a]->valence - degree[a]);
      s.hybridization = molrecord::Hybridization::kSP3;
      base.atoms.push_back(s);
    }
    base.scaffold_key = "topology-" + std::to_string(t);
    // One random embedding per conformer index, shared by both copies.
    std::vector<std::vector<molrecord::Coord>> shapes(cfg.conformers);
    for (auto& xyz : shapes) {
      xyz.assign(n, {0, 0, 0});
      for (const auto& b : base.bonds) {
        double dir[3], norm = 0.0;
        for (double& v : dir) {
          v = nn::StandardNormal(rng);
          norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int d = 0; d < 3; ++d) xyz[b.j][d] = xyz[b.i][d] + 1.5 * dir[d] / norm;
      }
    }
    for (int copy = 0; copy < 2; ++copy) {
      molrecord::MoleculeRecord r = base;
      r.id = "synth-" + std::to_string(t) + (copy == 0 ? "-compact" : "-extended");
      double rg = 0.0;
      for (const auto& xyz : shapes) {
        molrecord::Conformer c;
        c.coords = ScaleTo(xyz, copy == 0 ? cfg.compact_rg : cfg.extended_rg);
        c.energy = nn::UniformRange(rng, 0.0, cfg.energy_spread);
        rg += RadiusOfGyration(c.coords) / static_cast<double>(cfg.conformers);
        r.conformers.push_back(std::move(c));
      }
      r.labels = {rg > kSyntheticRgThreshold ? 1.0 : 0.0};
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace molfm::pipeline

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "molfm/molrecord/features.hpp"
#include "molfm/molrecord/record.hpp"
#include "molfm/molrecord/vocab.hpp"
#include "molfm/nn/tensor.hpp"

namespace molfm::encoders {

// Graph input width: the 38 atom features plus a flag column that is 1 only
// for masked atoms (whose 38 features are all zero).
inline constexpr std::size_t kGraphInputDim = molrecord::kAtomFeatureDim + 1;

// FNV-1a; stable across platforms.
std::uint64_t StableKey(std::string_view id);

// Everything the encoders need from one record, computed once per dataset.
struct MoleculeInputs {
  molrecord::TokenSequence tokens;
  std::vector<molrecord::AtomFeatures> atoms;
  std::vector<std::size_t> element_class;
  std::vector<std::array<std::size_t, 2>> bonds;
  std::vector<std::vector<molrecord::Coord>> conformers;
  std::vector<double> energies;
  std::uint64_t key = 0;  // StableKey(record id)

  std::size_t num_atoms() const { return atoms.size(); }
  std::size_t num_conformers() const { return conformers.size(); }
};

MoleculeInputs Featurize(const molrecord::MoleculeRecord& record,
                         const molrecord::Vocabulary& vocab,
                         std::size_t max_len = molrecord::kMaxTokens);

// Nodes of graph g occupy rows [offsets[g], offsets[g + 1]). Each bond
// contributes both directed edges.
struct GraphBatch {
  nn::Tensor<double> features;  // N x kGraphInputDim
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> node_graph;
  std::vector<std::size_t> offsets;

  std::size_t num_nodes() const { return node_graph.size(); }
  std::size_t num_graphs() const { return offsets.empty() ? 0 : offsets.size() - 1; }
};

// `masked[g]` lists local node indices of graph g to replace by the MASK
// pattern; pass an empty vector for no masking. Throws on an empty graph.
GraphBatch BuildGraphBatch(const std::vector<const MoleculeInputs*>& mols,
                           const std::vector<std::vector<std::size_t>>& masked = {});

struct RbfConfig {
  double cutoff = 10.0;
  std::size_t n_rbf = 64;
};

// 0.5 (cos(pi d / cutoff) + 1) for d <= cutoff, else 0.
double CosineCutoff(double d, double cutoff);

// Gaussians exp(-0.5 ((d - mu_j) / w)^2), mu_j evenly spaced on [0, cutoff]
// with w the spacing, scaled by CosineCutoff(d).
std::vector<double> RbfExpand(double d, const RbfConfig& cfg);

// Atoms of every selected conformer, stacked. Pairs (i, j), i != j, closer
// than the cutoff, with their expanded distances as rows of `rbf`.
struct ConformerBatch {
  nn::Tensor<double> features;  // atoms x 38
  std::vector<std::size_t> pair_i;
  std::vector<std::size_t> pair_j;
  nn::Tensor<double> rbf;  // pairs x n_rbf
  std::vector<std::size_t> atom_conformer;
  std::size_t num_conformers = 0;
};

// `selection[m]` lists the conformer indices of molecule m to embed; the
// output conformers follow molecule-major order.
ConformerBatch BuildConformerBatch(const std::vector<const MoleculeInputs*>& mols,
                                   const std::vector<std::vector<std::size_t>>& selection,
                                   const RbfConfig& cfg);

}  // namespace molfm::encoders

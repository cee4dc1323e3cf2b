// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "molfm/encoders/inputs.hpp"
#include "molfm/fusion/model.hpp"
#include "molfm/molrecord/record.hpp"
#include "molfm/nn/layers.hpp"

namespace molfm::objectives {

enum class PairAggregation { kMean, kSum };

PairAggregation ParsePairAggregation(std::string_view name);
std::string_view PairAggregationName(PairAggregation a);

struct ContrastiveConfig {
  double temperature = 0.07;
  bool normalize = true;
  PairAggregation aggregation = PairAggregation::kMean;
};

struct MaskingConfig {
  double mask_fraction = 0.15;
};

struct PretrainWeights {
  double lambda_map = 0.5;
};

// -(1/N) sum_i log softmax_j(z_a_i . z_b_j / tau)[i]. Rows are L2-normalized
// first when `normalize`. Throws for N < 2, tau <= 0, shape mismatch or a
// zero row under normalization.
template <typename T>
nn::Var<T> InfoNce(nn::Var<T> za, nn::Var<T> zb, double tau, bool normalize = true);

// InfoNCE over the six ordered modality pairs, averaged or summed.
template <typename T>
nn::Var<T> SymmetricContrastive(nn::Var<T> z1d, nn::Var<T> z2d, nn::Var<T> z3d,
                                const ContrastiveConfig& cfg);

// Masked node choice for one batch: `masked[g]` holds local indices (sorted)
// for BuildGraphBatch; targets are global node rows and element classes.
struct AtomMask {
  std::vector<std::vector<std::size_t>> masked;
  std::vector<std::size_t> target_nodes;
  std::vector<std::size_t> target_classes;
};

// max(1, round(fraction * N)) nodes per graph, uniformly without replacement.
// Throws on an empty graph or a fraction outside (0, 1].
AtomMask MaskAtoms(const std::vector<const encoders::MoleculeInputs*>& mols,
                   const MaskingConfig& cfg, nn::Rng& rng);

// Mean cross-entropy of `logits` (one row per target) against class ids.
template <typename T>
nn::Var<T> MaskedAtomLoss(nn::Var<T> logits, const std::vector<std::size_t>& targets);

template <typename T>
nn::Var<T> PretrainLoss(nn::Var<T> l_ctr, nn::Var<T> l_map, const PretrainWeights& w);
double PretrainLoss(double l_ctr, double l_map, const PretrainWeights& w);

// Label matrix and presence mask (1 = present) for a batch of records.
struct SupervisedTargets {
  nn::Tensor<double> values;
  nn::Tensor<double> mask;
};
SupervisedTargets BuildTargets(const std::vector<const molrecord::MoleculeRecord*>& records,
                               std::size_t num_tasks);

// Binary: mean sigmoid cross-entropy over present labels. Regression: mean
// squared error over present labels. Throws if no label is present.
template <typename T>
nn::Var<T> SupervisedLoss(nn::Var<T> logits, const SupervisedTargets& targets,
                          fusion::TaskKind kind);

// Projection heads for contrastive pre-training and the masked-atom
// classifier, registered under pretrain.*.
template <typename T>
class PretrainHeads {
 public:
  PretrainHeads(nn::ParameterStore<T>& store, const fusion::ModelConfig& cfg,
                std::size_t proj_dim, nn::Rng& rng);

  struct Losses {
    nn::Var<T> contrastive;
    nn::Var<T> masked_atom;
    nn::Var<T> total;
  };

  // Contrastive terms use h1d, h2d and the ensemble output h3d. The batch
  // must have been run with `mask` applied to its 2D input.
  Losses operator()(nn::Tape<T>& tape, const fusion::ModelOutputs<T>& out, const AtomMask& mask,
                    const ContrastiveConfig& ctr, const PretrainWeights& w) const;

 private:
  nn::Linear<T> proj1d_, proj2d_, proj3d_, atom_classifier_;
};

}  // namespace molfm::objectives

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/objectives/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "molfm/molrecord/features.hpp"

namespace molfm::objectives {

using nn::Tape;
using nn::Var;

PairAggregation ParsePairAggregation(std::string_view name) {
  if (name == "mean") return PairAggregation::kMean;
  if (name == "sum") return PairAggregation::kSum;
  throw std::invalid_argument("unknown contrastive aggregation \"" + std::string(name) +
                              "\" (expected mean or sum)");
}

std::string_view PairAggregationName(PairAggregation a) {
  return a == PairAggregation::kSum ? "sum" : "mean";
}

template <typename T>
Var<T> InfoNce(Var<T> za, Var<T> zb, double tau, bool normalize) {
  const std::size_t n = za.rows();
  if (n < 2) throw std::invalid_argument("info_nce: need N >= 2 (got " + std::to_string(n) + ")");
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: temperature must be > 0");
  if (zb.rows() != n || zb.cols() != za.cols()) {
    throw std::invalid_argument("info_nce: shape mismatch");
  }
  if (normalize) {
    za = nn::L2NormalizeRows(za);
    zb = nn::L2NormalizeRows(zb);
  }
  Var<T> logits = nn::Scale(nn::MatMul(za, zb, /*transpose_b=*/true), 1.0 / tau);
  std::vector<std::size_t> diag(n);
  std::iota(diag.begin(), diag.end(), 0);
  return nn::SoftmaxCrossEntropy(logits, diag);
}

template <typename T>
Var<T> SymmetricContrastive(Var<T> z1d, Var<T> z2d, Var<T> z3d, const ContrastiveConfig& cfg) {
  if (z1d.rows() != z2d.rows() || z1d.rows() != z3d.rows()) {
    throw std::invalid_argument("symmetric_contrastive: modalities differ in N");
  }
  const Var<T> z[3] = {z1d, z2d, z3d};
  Var<T> total;
  bool first = true;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      if (a == b) continue;
      Var<T> l = InfoNce(z[a], z[b], cfg.temperature, cfg.normalize);
      total = first ? l : nn::Add(total, l);
      first = false;
    }
  }
  return cfg.aggregation == PairAggregation::kMean ? nn::Scale(total, 1.0 / 6.0) : total;
}

AtomMask MaskAtoms(const std::vector<const encoders::MoleculeInputs*>& mols,
                   const MaskingConfig& cfg, nn::Rng& rng) {
  if (!(cfg.mask_fraction > 0.0) || cfg.mask_fraction > 1.0) {
    throw std::invalid_argument("mask_atoms: mask_fraction must be in (0, 1]");
  }
  AtomMask out;
  std::size_t base = 0;
  for (const encoders::MoleculeInputs* m : mols) {
    const std::size_t n = m->num_atoms();
    if (n == 0) throw std::invalid_argument("mask_atoms: empty graph");
    const auto want = static_cast<std::size_t>(std::lround(cfg.mask_fraction * static_cast<double>(n)));
    const std::size_t count = std::clamp<std::size_t>(want, 1, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(order[i], order[i + nn::UniformIndex(rng, n - i)]);
    }
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t a : chosen) {
      out.target_nodes.push_back(base + a);
      out.target_classes.push_back(m->element_class[a]);
    }
    out.masked.push_back(std::move(chosen));
    base += n;
  }
  return out;
}

template <typename T>
Var<T> MaskedAtomLoss(Var<T> logits, const std::vector<std::size_t>& targets) {
  if (targets.empty()) throw std::invalid_argument("masked_atom_loss: empty target list");
  if (logits.rows() != targets.size()) {
    throw std::invalid_argument("masked_atom_loss: logits/targets length mismatch");
  }
  return nn::SoftmaxCrossEntropy(logits, targets);
}

template <typename T>
Var<T> PretrainLoss(Var<T> l_ctr, Var<T> l_map, const PretrainWeights& w) {
  if (w.lambda_map < 0.0) throw std::invalid_argument("pretrain_loss: lambda must be >= 0");
  return nn::Add(l_ctr, nn::Scale(l_map, w.lambda_map));
}

double PretrainLoss(double l_ctr, double l_map, const PretrainWeights& w) {
  if (w.lambda_map < 0.0) throw std::invalid_argument("pretrain_loss: lambda must be >= 0");
  return l_ctr + w.lambda_map * l_map;
}

SupervisedTargets BuildTargets(const std::vector<const molrecord::MoleculeRecord*>& records,
                               std::size_t num_tasks) {
  SupervisedTargets t{nn::Tensor<double>::Matrix(records.size(), num_tasks),
                      nn::Tensor<double>::Matrix(records.size(), num_tasks)};
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& labels = records[i]->labels;
    if (labels.size() != num_tasks) {
      throw std::invalid_argument("record " + records[i]->id + ": expected " +
                                  std::to_string(num_tasks) + " labels");
    }
    for (std::size_t k = 0; k < num_tasks; ++k) {
      if (labels[k]) {
        t.values(i, k) = *labels[k];
        t.mask(i, k) = 1.0;
      }
    }
  }
  return t;
}

template <typename T>
Var<T> SupervisedLoss(Var<T> logits, const SupervisedTargets& targets, fusion::TaskKind kind) {
  if (logits.value().shape() != targets.values.shape() ||
      targets.mask.shape() != targets.values.shape()) {
    throw std::invalid_argument("supervised_loss: logits and labels differ in shape");
  }
  bool any = false;
  for (double m : targets.mask.storage()) any = any || m != 0.0;
  if (!any) throw std::invalid_argument("supervised_loss: all labels missing in batch");
  const nn::Tensor<T> y = targets.values.template Cast<T>();
  const nn::Tensor<T> m = targets.mask.template Cast<T>();
  return kind == fusion::TaskKind::kBinary ? nn::BinaryCrossEntropyWithLogits(logits, y, m)
                                           : nn::MaskedMeanSquaredError(logits, y, m);
}

template <typename T>
PretrainHeads<T>::PretrainHeads(nn::ParameterStore<T>& store, const fusion::ModelConfig& cfg,
                                std::size_t proj_dim, nn::Rng& rng)
    : proj1d_(store, "pretrain.proj1d", cfg.enc1d.d_model, proj_dim, rng),
      proj2d_(store, "pretrain.proj2d", cfg.enc2d.d_model, proj_dim, rng),
      proj3d_(store, "pretrain.proj3d", cfg.enc3d.d_model, proj_dim, rng),
      atom_classifier_(store, "pretrain.atom_classifier", cfg.enc2d.d_model,
                       molrecord::kElementClasses, rng) {}

template <typename T>
typename PretrainHeads<T>::Losses PretrainHeads<T>::operator()(
    Tape<T>& tape, const fusion::ModelOutputs<T>& out, const AtomMask& mask,
    const ContrastiveConfig& ctr, const PretrainWeights& w) const {
  Losses l;
  l.contrastive = SymmetricContrastive(proj1d_(tape, out.h1d), proj2d_(tape, out.h2d),
                                       proj3d_(tape, out.h3d), ctr);
  Var<T> states = nn::GatherRows(out.nodes2d, mask.target_nodes);
  l.masked_atom = MaskedAtomLoss(atom_classifier_(tape, states), mask.target_classes);
  l.total = PretrainLoss(l.contrastive, l.masked_atom, w);
  return l;
}

#define MOLFM_INSTANTIATE_OBJECTIVES(T)                                                      \
  template Var<T> InfoNce(Var<T>, Var<T>, double, bool);                                     \
  template Var<T> SymmetricContrastive(Var<T>, Var<T>, Var<T>, const ContrastiveConfig&);   \
  template Var<T> MaskedAtomLoss(Var<T>, const std::vector<std::size_t>&);                   \
  template Var<T> PretrainLoss(Var<T>, Var<T>, const PretrainWeights&);                      \
  template Var<T> SupervisedLoss(Var<T>, const SupervisedTargets&, fusion::TaskKind);        \
  template class PretrainHeads<T>;

MOLFM_INSTANTIATE_OBJECTIVES(float)
MOLFM_INSTANTIATE_OBJECTIVES(double)

#undef MOLFM_INSTANTIATE_OBJECTIVES

}  // namespace molfm::objectives

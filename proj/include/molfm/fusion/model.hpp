// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "molfm/encoders/encoders.hpp"
#include "molfm/encoders/inputs.hpp"
#include "molfm/nn/layers.hpp"

namespace molfm::fusion {

enum class EnsembleMode { kFull, kNoPrior, kSingle, kRandom };
enum class FusionMode { kCrossAttn, kConcatOnly };
enum class TaskKind { kBinary, kRegression };

enum class Variant {
  kFull,
  kOnly1D,
  kOnly2D,
  kOnly3D,
  kNo3D,
  kNo2D,
  kNo1D,
  kK1Conformer,
  kNoBoltzmann,
  kRandomConformer,
  kConcatOnly,
  kNoFilm,
  kNoPretrain,
};

// Canonical names ("full", "only_1d", ...). "no_cross_attn" and
// "no_cross_attention" parse as kConcatOnly. Throws on unknown names.
Variant ParseVariant(std::string_view name);
std::string_view VariantName(Variant v);
std::vector<Variant> AllVariants();

// Which parts of the model a variant switches on.
struct ModelOptions {
  bool use_1d = true;
  bool use_2d = true;
  bool use_3d = true;
  EnsembleMode ensemble = EnsembleMode::kFull;
  FusionMode fusion = FusionMode::kCrossAttn;
  bool film = true;
};
ModelOptions OptionsFor(Variant v);

struct ModelConfig {
  encoders::Encoder1DConfig enc1d;
  encoders::Encoder2DConfig enc2d;
  encoders::Encoder3DConfig enc3d;
  std::size_t fusion_dim = 256;
  std::size_t fusion_heads = 8;
  std::size_t context_dim = 0;
  std::size_t head_hidden = 128;
  double head_dropout = 0.2;
  std::size_t num_tasks = 1;
  TaskKind task = TaskKind::kBinary;
  double temperature = 298.0;  // K, for the Boltzmann prior
  std::uint64_t conformer_seed = 0;  // random-conformer choice
};

// a_k = w_q . h_k / sqrt(d) (+ log p_k), alpha = softmax within each
// molecule, output = sum_k alpha_k h_k.
template <typename T>
class EnsembleAttention {
 public:
  EnsembleAttention(nn::ParameterStore<T>& store, const std::string& name, std::size_t dim,
                    std::size_t out_dim, nn::Rng& rng);

  struct Output {
    nn::Var<T> pooled;  // M x dim
    nn::Var<T> alpha;   // C x 1
  };
  // Conformers of molecule m are rows [offsets[m], offsets[m + 1]) of h.
  Output operator()(nn::Tape<T>& tape, nn::Var<T> h, const std::vector<std::size_t>& offsets,
                    const std::vector<double>& log_prior, bool use_prior) const;

  nn::Var<T> Project(nn::Tape<T>& tape, nn::Var<T> pooled) const { return proj_(tape, pooled); }
  nn::Parameter<T>& query() const { return *query_; }

 private:
  nn::Parameter<T>* query_ = nullptr;
  nn::Linear<T> proj_;
  std::size_t dim_ = 0;
};

// Multi-head attention with one query token and one key/value token. The key
// projection has no bias.
template <typename T>
class CrossAttnBlock {
 public:
  CrossAttnBlock(nn::ParameterStore<T>& store, const std::string& name, std::size_t dim,
                 std::size_t heads, nn::Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, nn::Var<T> query, nn::Var<T> kv) const;

  const nn::Linear<T>& output() const { return o_; }

 private:
  nn::Linear<T> q_, k_, v_, o_;
  std::size_t heads_ = 1;
};

// gamma(c) * h + beta(c); gamma's bias starts at 1 and beta's at 0.
template <typename T>
class FiLM {
 public:
  FiLM(nn::ParameterStore<T>& store, const std::string& name, std::size_t context_dim,
       std::size_t dim, nn::Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, nn::Var<T> h, nn::Var<T> context) const;

  const nn::Linear<T>& gamma() const { return gamma_; }
  const nn::Linear<T>& beta() const { return beta_; }

 private:
  nn::Linear<T> gamma_, beta_;
  std::size_t context_dim_ = 0;
};

struct ModelBatch {
  std::vector<const encoders::MoleculeInputs*> mols;
  nn::Tensor<double> context;  // M x context_dim
  // Optional MASK replacement of 2D nodes (pre-training); see BuildGraphBatch.
  std::vector<std::vector<std::size_t>> masked;
};

template <typename T>
struct ModelOutputs {
  nn::Var<T> h1d;       // M x d1, zero when 1D is off
  nn::Var<T> h2d;       // M x d2
  nn::Var<T> nodes2d;   // N x d2 (invalid when 2D is off)
  nn::Var<T> h3d;       // M x d3, ensemble output before projection
  nn::Var<T> h3d_proj;  // M x fusion_dim
  nn::Var<T> alpha;     // C x 1 (invalid when 3D is off)
  std::vector<std::size_t> conformer_offsets;
  std::vector<std::vector<std::size_t>> conformer_selection;
  nn::Var<T> fused;
  nn::Var<T> conditioned;
  nn::Var<T> logits;  // M x num_tasks
};

template <typename T>
class MolFM {
 public:
  // Parameters are registered in `store` under enc1d., enc2d., enc3d., ens.,
  // ca12., ca13., ca23., fuse., film., head.
  MolFM(nn::ParameterStore<T>& store, ModelConfig cfg, ModelOptions options, nn::Rng& rng);

  ModelOutputs<T> Forward(nn::Tape<T>& tape, const ModelBatch& batch,
                          const nn::ForwardMode& mode) const;

  // Conformer indices used for molecule `mol` under the ensemble mode.
  std::vector<std::size_t> SelectConformers(const encoders::MoleculeInputs& mol) const;

  const ModelConfig& config() const { return cfg_; }
  const ModelOptions& options() const { return options_; }
  nn::ParameterStore<T>& store() const { return *store_; }
  const EnsembleAttention<T>& ensemble() const { return ensemble_; }
  const CrossAttnBlock<T>& cross(std::size_t i) const;
  const FiLM<T>& film() const { return film_; }

 private:
  nn::ParameterStore<T>* store_;
  ModelConfig cfg_;
  ModelOptions options_;
  encoders::Encoder1D<T> enc1d_;
  encoders::Encoder2D<T> enc2d_;
  encoders::Encoder3D<T> enc3d_;
  EnsembleAttention<T> ensemble_;
  CrossAttnBlock<T> ca12_, ca13_, ca23_;
  nn::Linear<T> fuse1_, fuse2_;
  FiLM<T> film_;
  nn::Linear<T> head1_, head2_;
};

// Applies sigmoid for binary tasks, identity for regression.
nn::Tensor<double> OutputsToPredictions(const nn::Tensor<double>& logits, TaskKind task);

struct McPrediction {
  nn::Tensor<double> mean;  // M x tasks, prediction scale
  nn::Tensor<double> std;   // population std over passes
};

// `passes` dropout-active forward passes (batch norm in eval mode); pass t
// draws its masks from DeriveRng(seed, t). Throws if passes < 1.
template <typename T>
McPrediction McDropoutPredict(const MolFM<T>& model, const ModelBatch& batch, std::size_t passes,
                              std::uint64_t seed);

// Deterministic inference (dropout off, eval batch norm), prediction scale.
template <typename T>
nn::Tensor<double> Predict(const MolFM<T>& model, const ModelBatch& batch);

}  // namespace molfm::fusion

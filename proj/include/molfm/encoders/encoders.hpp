// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "molfm/encoders/inputs.hpp"
#include "molfm/nn/layers.hpp"

namespace molfm::encoders {

struct Encoder1DConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 256;
  std::size_t layers = 4;
  std::size_t heads = 8;
  std::size_t d_ff = 1024;
  std::size_t max_len = 256;
  double dropout = 0.1;
};

struct Encoder2DConfig {
  std::size_t in_dim = molrecord::kAtomFeatureDim;
  std::size_t d_model = 256;
  std::size_t layers = 4;
  double dropout = 0.1;
};

struct Encoder3DConfig {
  std::size_t d_model = 128;
  std::size_t interactions = 3;
  double cutoff = 10.0;
  std::size_t n_rbf = 64;
  double dropout = 0.1;

  RbfConfig rbf() const { return {cutoff, n_rbf}; }
};

// sin/cos table, rows = positions.
nn::Tensor<double> SinusoidalPositions(std::size_t max_len, std::size_t d_model);

// Post-norm transformer over SELFIES tokens, final LayerNorm, mean over the
// valid positions. Key projections have no bias.
template <typename T>
class Encoder1D {
 public:
  Encoder1D(nn::ParameterStore<T>& store, const std::string& name, Encoder1DConfig cfg,
            nn::Rng& rng);

  // B x d_model. Throws if a sequence has no valid token.
  nn::Var<T> operator()(nn::Tape<T>& tape,
                        const std::vector<const molrecord::TokenSequence*>& seqs,
                        const nn::ForwardMode& mode) const;

  const Encoder1DConfig& config() const { return cfg_; }

 private:
  struct Layer {
    nn::Linear<T> q, k, v, o;
    nn::LayerNormLayer<T> ln1;
    nn::Linear<T> ff1, ff2;
    nn::LayerNormLayer<T> ln2;
  };
  Encoder1DConfig cfg_;
  nn::Embedding<T> embed_;
  std::vector<Layer> layers_;
  nn::LayerNormLayer<T> final_ln_;
  nn::Tensor<T> positions_;
};

// h' = MLP((1 + eps) h + sum of neighbours), two linear layers with ReLU; the
// second has no bias (batch norm follows).
template <typename T>
class GinLayer {
 public:
  GinLayer(nn::ParameterStore<T>& store, const std::string& name, std::size_t dim,
           nn::Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, nn::Var<T> h, const std::vector<std::size_t>& src,
                        const std::vector<std::size_t>& dst) const;

  nn::Parameter<T>& eps() const { return *eps_; }
  const nn::Linear<T>& mlp1() const { return mlp1_; }
  const nn::Linear<T>& mlp2() const { return mlp2_; }

 private:
  nn::Parameter<T>* eps_ = nullptr;
  nn::Linear<T> mlp1_, mlp2_;
};

template <typename T>
struct Encoded2D {
  nn::Var<T> nodes;   // N x d_model, final per-node states
  nn::Var<T> pooled;  // G x d_model
};

// Input projection, GIN layers each followed by batch norm, ReLU, dropout
// and a residual add, then per-graph mean pool.
template <typename T>
class Encoder2D {
 public:
  Encoder2D(nn::ParameterStore<T>& store, const std::string& name, Encoder2DConfig cfg,
            nn::Rng& rng);

  Encoded2D<T> operator()(nn::Tape<T>& tape, const GraphBatch& g,
                          const nn::ForwardMode& mode) const;

  const Encoder2DConfig& config() const { return cfg_; }

 private:
  Encoder2DConfig cfg_;
  nn::Linear<T> input_;
  std::vector<GinLayer<T>> gin_;
  std::vector<nn::BatchNormLayer<T>> norms_;
};

// Continuous-filter interaction: filter = Linear(ssp(Linear(rbf))), message
// in(h_j) * filter(d_ij) summed over neighbours, update out2(ssp(out1(.)))
// added to h.
template <typename T>
class SchNetInteraction {
 public:
  SchNetInteraction(nn::ParameterStore<T>& store, const std::string& name, std::size_t dim,
                    std::size_t n_rbf, nn::Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, nn::Var<T> h, nn::Var<T> rbf,
                        const std::vector<std::size_t>& pair_i,
                        const std::vector<std::size_t>& pair_j,
                        const nn::ForwardMode& mode, double dropout) const;

 private:
  nn::Linear<T> in_, filter1_, filter2_, out1_, out2_;
};

// Atom embedding, interactions, mean over atoms, output projection. One row
// per conformer of the batch.
template <typename T>
class Encoder3D {
 public:
  Encoder3D(nn::ParameterStore<T>& store, const std::string& name, Encoder3DConfig cfg,
            nn::Rng& rng);

  nn::Var<T> operator()(nn::Tape<T>& tape, const ConformerBatch& b,
                        const nn::ForwardMode& mode) const;

  const Encoder3DConfig& config() const { return cfg_; }

 private:
  Encoder3DConfig cfg_;
  nn::Linear<T> embed_;
  std::vector<SchNetInteraction<T>> interactions_;
  nn::Linear<T> output_;
};

}  // namespace molfm::encoders

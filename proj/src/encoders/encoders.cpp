// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/encoders/encoders.hpp"

#include <cmath>
#include <stdexcept>

namespace molfm::encoders {

using nn::ForwardMode;
using nn::Tape;
using nn::Var;

nn::Tensor<double> SinusoidalPositions(std::size_t max_len, std::size_t d_model) {
  nn::Tensor<double> pe = nn::Tensor<double>::Matrix(max_len, d_model);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
      pe(pos, i) = std::sin(angle);
      if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

template <typename T>
Encoder1D<T>::Encoder1D(nn::ParameterStore<T>& store, const std::string& name,
                        Encoder1DConfig cfg, nn::Rng& rng)
    : cfg_(cfg) {
  if (cfg_.vocab_size == 0) throw std::invalid_argument("encode_1d: vocab_size is 0");
  if (cfg_.heads == 0 || cfg_.d_model % cfg_.heads != 0) {
    throw std::invalid_argument("encode_1d: d_model must be divisible by heads");
  }
  const std::size_t d = cfg_.d_model;
  embed_ = nn::Embedding<T>(store, name + ".embed", cfg_.vocab_size, d, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = name + ".layers." + std::to_string(l);
    layers_.push_back({nn::Linear<T>(store, p + ".attn.q", d, d, rng),
                       nn::Linear<T>(store, p + ".attn.k", d, d, rng, /*bias=*/false),
                       nn::Linear<T>(store, p + ".attn.v", d, d, rng),
                       nn::Linear<T>(store, p + ".attn.o", d, d, rng),
                       nn::LayerNormLayer<T>(store, p + ".ln1", d),
                       nn::Linear<T>(store, p + ".ff1", d, cfg_.d_ff, rng),
                       nn::Linear<T>(store, p + ".ff2", cfg_.d_ff, d, rng),
                       nn::LayerNormLayer<T>(store, p + ".ln2", d)});
  }
  final_ln_ = nn::LayerNormLayer<T>(store, name + ".final_ln", d);
  positions_ = SinusoidalPositions(cfg_.max_len, d).template Cast<T>();
}

template <typename T>
Var<T> Encoder1D<T>::operator()(Tape<T>& tape,
                                const std::vector<const molrecord::TokenSequence*>& seqs,
                                const ForwardMode& mode) const {
  const std::size_t batch = seqs.size();
  const std::size_t d = cfg_.d_model;
  // Trim to the longest valid prefix in the batch; padding beyond it is
  // never attended to or pooled.
  std::size_t len = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& m = seqs[b]->mask;
    std::size_t last = 0;
    for (std::size_t t = 0; t < m.size(); ++t) {
      if (m[t]) last = t + 1;
    }
    if (last == 0) {
      throw std::invalid_argument("encode_1d: sequence " + std::to_string(b) +
                                  " has no valid tokens");
    }
    if (last > cfg_.max_len) throw std::invalid_argument("encode_1d: sequence exceeds max_len");
    len = std::max(len, last);
  }
  std::vector<std::size_t> ids(batch * len);
  std::vector<std::uint8_t> valid(batch * len);
  std::vector<std::size_t> valid_rows, valid_seq;
  nn::Tensor<T> pos = nn::Tensor<T>::Matrix(batch * len, d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t r = b * len + t;
      const bool on = t < seqs[b]->mask.size() && seqs[b]->mask[t];
      ids[r] = on ? seqs[b]->ids[t] : molrecord::Vocabulary::kPad;
      valid[r] = on ? 1 : 0;
      if (on) {
        valid_rows.push_back(r);
        valid_seq.push_back(b);
      }
      std::copy(positions_.row(t).begin(), positions_.row(t).end(), pos.row(r).begin());
    }
  }
  Var<T> x = nn::Add(embed_(tape, ids), tape.Constant(std::move(pos)));
  x = nn::ApplyDropout(x, cfg_.dropout, mode);
  for (const Layer& layer : layers_) {
    Var<T> a = nn::MultiHeadAttention(layer.q(tape, x), layer.k(tape, x), layer.v(tape, x),
                                      batch, len, len, cfg_.heads, valid);
    a = nn::ApplyDropout(layer.o(tape, a), cfg_.dropout, mode);
    x = layer.ln1(tape, nn::Add(x, a));
    Var<T> f = nn::ApplyDropout(nn::Relu(layer.ff1(tape, x)), cfg_.dropout, mode);
    f = nn::ApplyDropout(layer.ff2(tape, f), cfg_.dropout, mode);
    x = layer.ln2(tape, nn::Add(x, f));
  }
  x = final_ln_(tape, x);
  return nn::SegmentMeanRows(nn::GatherRows(x, valid_rows), valid_seq, batch);
}

template <typename T>
GinLayer<T>::GinLayer(nn::ParameterStore<T>& store, const std::string& name, std::size_t dim,
                      nn::Rng& rng)
    : eps_(&store.Add(name + ".eps", {1})),
      mlp1_(store, name + ".mlp1", dim, dim, rng),
      mlp2_(store, name + ".mlp2", dim, dim, rng, /*bias=*/false) {}

template <typename T>
Var<T> GinLayer<T>::operator()(Tape<T>& tape, Var<T> h, const std::vector<std::size_t>& src,
                               const std::vector<std::size_t>& dst) const {
  const std::size_t n = h.rows();
  Var<T> agg = nn::Add(h, nn::MulScalar(h, tape.Param(*eps_)));
  if (!src.empty()) agg = nn::Add(agg, nn::IndexAddRows(nn::GatherRows(h, src), dst, n));
  return mlp2_(tape, nn::Relu(mlp1_(tape, agg)));
}

template <typename T>
Encoder2D<T>::Encoder2D(nn::ParameterStore<T>& store, const std::string& name,
                        Encoder2DConfig cfg, nn::Rng& rng)
    : cfg_(cfg) {
  if (cfg_.layers == 0) throw std::invalid_argument("encode_2d: layers must be >= 1");
  input_ = nn::Linear<T>(store, name + ".input", cfg_.in_dim + 1, cfg_.d_model, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = name + ".layers." + std::to_string(l);
    gin_.emplace_back(store, p + ".gin", cfg_.d_model, rng);
    norms_.emplace_back(store, p + ".bn", cfg_.d_model);
  }
}

template <typename T>
Encoded2D<T> Encoder2D<T>::operator()(Tape<T>& tape, const GraphBatch& g,
                                      const ForwardMode& mode) const {
  if (g.features.cols() != cfg_.in_dim + 1) {
    throw std::invalid_argument("encode_2d: expected " + std::to_string(cfg_.in_dim + 1) +
                                " input columns");
  }
  for (std::size_t gi = 0; gi < g.num_graphs(); ++gi) {
    if (g.offsets[gi + 1] == g.offsets[gi]) throw std::invalid_argument("encode_2d: empty graph");
  }
  Var<T> h = input_(tape, tape.Constant(g.features.Cast<T>()));
  for (std::size_t l = 0; l < gin_.size(); ++l) {
    Var<T> u = norms_[l](tape, gin_[l](tape, h, g.src, g.dst), mode);
    u = nn::ApplyDropout(nn::Relu(u), cfg_.dropout, mode);
    h = nn::Add(h, u);
  }
  return {h, nn::SegmentMeanRows(h, g.node_graph, g.num_graphs())};
}

template <typename T>
SchNetInteraction<T>::SchNetInteraction(nn::ParameterStore<T>& store, const std::string& name,
                                        std::size_t dim, std::size_t n_rbf, nn::Rng& rng)
    : in_(store, name + ".in", dim, dim, rng, /*bias=*/false),
      filter1_(store, name + ".filter1", n_rbf, dim, rng),
      filter2_(store, name + ".filter2", dim, dim, rng),
      out1_(store, name + ".out1", dim, dim, rng),
      out2_(store, name + ".out2", dim, dim, rng) {}

template <typename T>
Var<T> SchNetInteraction<T>::operator()(Tape<T>& tape, Var<T> h, Var<T> rbf,
                                        const std::vector<std::size_t>& pair_i,
                                        const std::vector<std::size_t>& pair_j,
                                        const ForwardMode& mode, double dropout) const {
  if (pair_i.empty()) return h;  // no neighbours: the sum is empty
  const std::size_t n = h.rows();
  Var<T> filter = filter2_(tape, nn::ShiftedSoftplus(filter1_(tape, rbf)));
  Var<T> message = nn::Mul(nn::GatherRows(in_(tape, h), pair_j), filter);
  Var<T> agg = nn::IndexAddRows(message, pair_i, n);
  Var<T> v = out2_(tape, nn::ShiftedSoftplus(out1_(tape, agg)));
  return nn::Add(h, nn::ApplyDropout(v, dropout, mode));
}

template <typename T>
Encoder3D<T>::Encoder3D(nn::ParameterStore<T>& store, const std::string& name,
                        Encoder3DConfig cfg, nn::Rng& rng)
    : cfg_(cfg) {
  if (!(cfg_.cutoff > 0.0)) throw std::invalid_argument("encode_3d: cutoff must be > 0");
  if (cfg_.n_rbf == 0) throw std::invalid_argument("encode_3d: n_rbf must be >= 1");
  embed_ = nn::Linear<T>(store, name + ".embed", molrecord::kAtomFeatureDim, cfg_.d_model, rng);
  for (std::size_t l = 0; l < cfg_.interactions; ++l) {
    interactions_.emplace_back(store, name + ".interactions." + std::to_string(l),
                               cfg_.d_model, cfg_.n_rbf, rng);
  }
  output_ = nn::Linear<T>(store, name + ".output", cfg_.d_model, cfg_.d_model, rng);
}

template <typename T>
Var<T> Encoder3D<T>::operator()(Tape<T>& tape, const ConformerBatch& b,
                                const ForwardMode& mode) const {
  if (b.num_conformers == 0 || b.features.rows() == 0) {
    throw std::invalid_argument("encode_3d: empty conformer batch");
  }
  if (b.rbf.cols() != cfg_.n_rbf && !b.pair_i.empty()) {
    throw std::invalid_argument("encode_3d: rbf width mismatch");
  }
  Var<T> h = embed_(tape, tape.Constant(b.features.Cast<T>()));
  Var<T> rbf = tape.Constant(b.rbf.Cast<T>());
  for (const SchNetInteraction<T>& block : interactions_) {
    h = block(tape, h, rbf, b.pair_i, b.pair_j, mode, cfg_.dropout);
  }
  return output_(tape, nn::SegmentMeanRows(h, b.atom_conformer, b.num_conformers));
}

template class Encoder1D<float>;
template class Encoder1D<double>;
template class GinLayer<float>;
template class GinLayer<double>;
template class Encoder2D<float>;
template class Encoder2D<double>;
template class SchNetInteraction<float>;
template class SchNetInteraction<double>;
template class Encoder3D<float>;
template class Encoder3D<double>;

}  // namespace molfm::encoders

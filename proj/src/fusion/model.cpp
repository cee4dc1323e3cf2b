// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/fusion/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "molfm/molrecord/features.hpp"

namespace molfm::fusion {

using nn::ForwardMode;
using nn::Tape;
using nn::Var;

namespace {

struct VariantEntry {
  std::string_view name;
  Variant variant;
};

constexpr VariantEntry kVariants[] = {
    {"full", Variant::kFull},
    {"only_1d", Variant::kOnly1D},
    {"only_2d", Variant::kOnly2D},
    {"only_3d", Variant::kOnly3D},
    {"no_3d", Variant::kNo3D},
    {"no_2d", Variant::kNo2D},
    {"no_1d", Variant::kNo1D},
    {"k1_conformer", Variant::kK1Conformer},
    {"no_boltzmann", Variant::kNoBoltzmann},
    {"random_conformer", Variant::kRandomConformer},
    {"concat_only", Variant::kConcatOnly},
    {"no_film", Variant::kNoFilm},
    {"no_pretrain", Variant::kNoPretrain},
};

template <typename T>
Var<T> Zeros(Tape<T>& tape, std::size_t rows, std::size_t cols) {
  return tape.Constant(nn::Tensor<T>::Matrix(rows, cols));
}

}  // namespace

Variant ParseVariant(std::string_view name) {
  for (const VariantEntry& e : kVariants) {
    if (e.name == name) return e.variant;
  }
  if (name == "no_cross_attn" || name == "no_cross_attention") return Variant::kConcatOnly;
  throw std::invalid_argument("unknown ablation variant \"" + std::string(name) + "\"");
}

std::string_view VariantName(Variant v) {
  for (const VariantEntry& e : kVariants) {
    if (e.variant == v) return e.name;
  }
  return "full";
}

std::vector<Variant> AllVariants() {
  std::vector<Variant> out;
  for (const VariantEntry& e : kVariants) out.push_back(e.variant);
  return out;
}

ModelOptions OptionsFor(Variant v) {
  ModelOptions o;
  switch (v) {
    case Variant::kFull:
    case Variant::kNoPretrain:
      break;
    case Variant::kOnly1D:
      o.use_2d = o.use_3d = false;
      break;
    case Variant::kOnly2D:
      o.use_1d = o.use_3d = false;
      break;
    case Variant::kOnly3D:
      o.use_1d = o.use_2d = false;
      break;
    case Variant::kNo3D:
      o.use_3d = false;
      break;
    case Variant::kNo2D:
      o.use_2d = false;
      break;
    case Variant::kNo1D:
      o.use_1d = false;
      break;
    case Variant::kK1Conformer:
      o.ensemble = EnsembleMode::kSingle;
      break;
    case Variant::kNoBoltzmann:
      o.ensemble = EnsembleMode::kNoPrior;
      break;
    case Variant::kRandomConformer:
      o.ensemble = EnsembleMode::kRandom;
      break;
    case Variant::kConcatOnly:
      o.fusion = FusionMode::kConcatOnly;
      break;
    case Variant::kNoFilm:
      o.film = false;
      break;
  }
  return o;
}

template <typename T>
EnsembleAttention<T>::EnsembleAttention(nn::ParameterStore<T>& store, const std::string& name,
                                        std::size_t dim, std::size_t out_dim, nn::Rng& rng)
    : query_(&store.Add(name + ".query", {dim, 1})),
      proj_(store, name + ".proj", dim, out_dim, rng),
      dim_(dim) {
  nn::XavierUniform(*query_, dim, 1, rng);
}

template <typename T>
typename EnsembleAttention<T>::Output EnsembleAttention<T>::operator()(
    Tape<T>& tape, Var<T> h, const std::vector<std::size_t>& offsets,
    const std::vector<double>& log_prior, bool use_prior) const {
  const std::size_t c = h.rows();
  if (offsets.size() < 2 || offsets.back() != c) {
    throw std::invalid_argument("ensemble attention: offsets do not cover the conformers");
  }
  for (std::size_t m = 0; m + 1 < offsets.size(); ++m) {
    if (offsets[m + 1] <= offsets[m]) throw std::invalid_argument("ensemble attention: empty ensemble");
  }
  Var<T> score = nn::Scale(nn::MatMul(h, tape.Param(*query_)),
                           1.0 / std::sqrt(static_cast<double>(dim_)));
  if (use_prior) {
    if (log_prior.size() != c) {
      throw std::invalid_argument("ensemble attention: energy/embedding length mismatch");
    }
    nn::Tensor<T> prior = nn::Tensor<T>::Matrix(c, 1);
    for (std::size_t k = 0; k < c; ++k) prior[k] = static_cast<T>(log_prior[k]);
    score = nn::Add(score, tape.Constant(std::move(prior)));
  }
  Var<T> alpha = nn::SegmentSoftmax(score, offsets);
  return {nn::SegmentSumRows(nn::MulCol(h, alpha), offsets), alpha};
}

template <typename T>
CrossAttnBlock<T>::CrossAttnBlock(nn::ParameterStore<T>& store, const std::string& name,
                                  std::size_t dim, std::size_t heads, nn::Rng& rng)
    : q_(store, name + ".q", dim, dim, rng),
      k_(store, name + ".k", dim, dim, rng, /*bias=*/false),
      v_(store, name + ".v", dim, dim, rng),
      o_(store, name + ".o", dim, dim, rng),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw std::invalid_argument("cross attention: dim must be divisible by heads");
  }
}

template <typename T>
Var<T> CrossAttnBlock<T>::operator()(Tape<T>& tape, Var<T> query, Var<T> kv) const {
  if (query.cols() != q_.in_features() || kv.cols() != k_.in_features() ||
      query.rows() != kv.rows()) {
    throw std::invalid_argument("cross attention: wrong input dimensionality");
  }
  const std::size_t m = query.rows();
  const std::vector<std::uint8_t> valid(m, 1);
  Var<T> att = nn::MultiHeadAttention(q_(tape, query), k_(tape, kv), v_(tape, kv), m, 1, 1,
                                      heads_, valid);
  return o_(tape, att);
}

template <typename T>
FiLM<T>::FiLM(nn::ParameterStore<T>& store, const std::string& name, std::size_t context_dim,
              std::size_t dim, nn::Rng& rng)
    : gamma_(store, name + ".gamma", context_dim, dim, rng),
      beta_(store, name + ".beta", context_dim, dim, rng),
      context_dim_(context_dim) {
  gamma_.bias()->value.Fill(T{1});
}

template <typename T>
Var<T> FiLM<T>::operator()(Tape<T>& tape, Var<T> h, Var<T> context) const {
  if (context.cols() != context_dim_ && !(context_dim_ == 0 && context.value().empty())) {
    throw std::invalid_argument("film: context length " + std::to_string(context.cols()) +
                                " != " + std::to_string(context_dim_));
  }
  const std::size_t m = h.rows();
  Var<T> gamma, beta;
  if (context_dim_ == 0) {
    gamma = nn::AddRow(Zeros(tape, m, h.cols()), tape.Param(*gamma_.bias()));
    beta = nn::AddRow(Zeros(tape, m, h.cols()), tape.Param(*beta_.bias()));
  } else {
    gamma = gamma_(tape, context);
    beta = beta_(tape, context);
  }
  return nn::Add(nn::Mul(gamma, h), beta);
}

template <typename T>
MolFM<T>::MolFM(nn::ParameterStore<T>& store, ModelConfig cfg, ModelOptions options,
                nn::Rng& rng)
    : store_(&store),
      cfg_(cfg),
      options_(options),
      enc1d_(store, "enc1d", cfg.enc1d, rng),
      enc2d_(store, "enc2d", cfg.enc2d, rng),
      enc3d_(store, "enc3d", cfg.enc3d, rng),
      ensemble_(store, "ens", cfg.enc3d.d_model, cfg.fusion_dim, rng),
      ca12_(store, "ca12", cfg.fusion_dim, cfg.fusion_heads, rng),
      ca13_(store, "ca13", cfg.fusion_dim, cfg.fusion_heads, rng),
      ca23_(store, "ca23", cfg.fusion_dim, cfg.fusion_heads, rng),
      fuse1_(store, "fuse.fc1", 3 * cfg.fusion_dim, cfg.fusion_dim, rng),
      fuse2_(store, "fuse.fc2", cfg.fusion_dim, cfg.fusion_dim, rng),
      film_(store, "film", cfg.context_dim, cfg.fusion_dim, rng),
      head1_(store, "head.fc1", cfg.fusion_dim, cfg.head_hidden, rng),
      head2_(store, "head.fc2", cfg.head_hidden, cfg.num_tasks, rng) {
  if (cfg.enc1d.d_model != cfg.fusion_dim || cfg.enc2d.d_model != cfg.fusion_dim) {
    throw std::invalid_argument("model: 1D and 2D widths must equal fusion_dim");
  }
  if (cfg.num_tasks == 0) throw std::invalid_argument("model: num_tasks must be >= 1");
}

template <typename T>
const CrossAttnBlock<T>& MolFM<T>::cross(std::size_t i) const {
  switch (i) {
    case 0:
      return ca12_;
    case 1:
      return ca13_;
    default:
      return ca23_;
  }
}

template <typename T>
std::vector<std::size_t> MolFM<T>::SelectConformers(const encoders::MoleculeInputs& mol) const {
  const std::size_t k = mol.num_conformers();
  if (k == 0) throw std::invalid_argument("ensemble attention: empty ensemble");
  switch (options_.ensemble) {
    case EnsembleMode::kSingle: {
      const auto it = std::min_element(mol.energies.begin(), mol.energies.end());
      return {static_cast<std::size_t>(it - mol.energies.begin())};
    }
    case EnsembleMode::kRandom: {
      nn::Rng rng = nn::DeriveRng(cfg_.conformer_seed, mol.key);
      return {nn::UniformIndex(rng, k)};
    }
    default: {
      std::vector<std::size_t> all(k);
      for (std::size_t i = 0; i < k; ++i) all[i] = i;
      return all;
    }
  }
}

template <typename T>
ModelOutputs<T> MolFM<T>::Forward(Tape<T>& tape, const ModelBatch& batch,
                                  const ForwardMode& mode) const {
  const std::size_t m = batch.mols.size();
  if (m == 0) throw std::invalid_argument("model: empty batch");
  const std::size_t d = cfg_.fusion_dim;
  ModelOutputs<T> out;

  if (options_.use_1d) {
    std::vector<const molrecord::TokenSequence*> seqs;
    for (const auto* mol : batch.mols) seqs.push_back(&mol->tokens);
    out.h1d = enc1d_(tape, seqs, mode);
  } else {
    out.h1d = Zeros(tape, m, d);
  }

  if (options_.use_2d) {
    const encoders::GraphBatch g = encoders::BuildGraphBatch(batch.mols, batch.masked);
    encoders::Encoded2D<T> enc = enc2d_(tape, g, mode);
    out.h2d = enc.pooled;
    out.nodes2d = enc.nodes;
  } else {
    out.h2d = Zeros(tape, m, d);
  }

  if (options_.use_3d) {
    std::vector<double> log_prior;
    out.conformer_offsets.push_back(0);
    for (const auto* mol : batch.mols) {
      std::vector<std::size_t> sel = SelectConformers(*mol);
      std::vector<double> energies;
      for (std::size_t k : sel) energies.push_back(mol->energies.at(k));
      const std::vector<double> lp = molrecord::LogBoltzmannWeights(energies, cfg_.temperature);
      log_prior.insert(log_prior.end(), lp.begin(), lp.end());
      out.conformer_offsets.push_back(out.conformer_offsets.back() + sel.size());
      out.conformer_selection.push_back(std::move(sel));
    }
    const encoders::ConformerBatch cb =
        encoders::BuildConformerBatch(batch.mols, out.conformer_selection, cfg_.enc3d.rbf());
    Var<T> per_conformer = enc3d_(tape, cb, mode);
    const bool prior = options_.ensemble != EnsembleMode::kNoPrior;
    auto ens = ensemble_(tape, per_conformer, out.conformer_offsets, log_prior, prior);
    out.h3d = ens.pooled;
    out.alpha = ens.alpha;
    out.h3d_proj = ensemble_.Project(tape, ens.pooled);
  } else {
    out.h3d = Zeros(tape, m, cfg_.enc3d.d_model);
    out.h3d_proj = Zeros(tape, m, d);
  }

  Var<T> t1 = out.h1d;
  Var<T> t2 = out.h2d;
  if (options_.fusion == FusionMode::kCrossAttn) {
    const ModelOptions& o = options_;
    if (o.use_1d && o.use_2d) t1 = nn::Add(t1, ca12_(tape, out.h1d, out.h2d));
    if (o.use_1d && o.use_3d) t1 = nn::Add(t1, ca13_(tape, out.h1d, out.h3d_proj));
    if (o.use_2d && o.use_3d) t2 = nn::Add(t2, ca23_(tape, out.h2d, out.h3d_proj));
  }
  Var<T> cat = nn::ConcatCols(std::vector<Var<T>>{t1, t2, out.h3d_proj});
  out.fused = fuse2_(tape, nn::Relu(fuse1_(tape, cat)));

  if (options_.film) {
    nn::Tensor<T> ctx = nn::Tensor<T>::Matrix(m, cfg_.context_dim);
    if (cfg_.context_dim > 0) {
      if (batch.context.rows() != m || batch.context.cols() != cfg_.context_dim) {
        throw std::invalid_argument("film: context length mismatch");
      }
      ctx = batch.context.template Cast<T>();
    }
    out.conditioned = film_(tape, out.fused, tape.Constant(std::move(ctx)));
  } else {
    out.conditioned = out.fused;
  }

  Var<T> hidden = nn::ApplyDropout(nn::Relu(head1_(tape, out.conditioned)), cfg_.head_dropout, mode);
  out.logits = head2_(tape, hidden);
  return out;
}

nn::Tensor<double> OutputsToPredictions(const nn::Tensor<double>& logits, TaskKind task) {
  nn::Tensor<double> out = logits;
  if (task == TaskKind::kBinary) {
    for (double& v : out.storage()) v = 1.0 / (1.0 + std::exp(-v));
  }
  return out;
}

template <typename T>
nn::Tensor<double> Predict(const MolFM<T>& model, const ModelBatch& batch) {
  Tape<T> tape;
  const ModelOutputs<T> out = model.Forward(tape, batch, ForwardMode{});
  return OutputsToPredictions(out.logits.value().template Cast<double>(), model.config().task);
}

template <typename T>
McPrediction McDropoutPredict(const MolFM<T>& model, const ModelBatch& batch, std::size_t passes,
                              std::uint64_t seed) {
  if (passes < 1) throw std::invalid_argument("mc dropout: passes must be >= 1");
  std::vector<nn::Tensor<double>> samples;
  for (std::size_t t = 0; t < passes; ++t) {
    nn::Rng rng = nn::DeriveRng(seed, t);
    Tape<T> tape;
    const ModelOutputs<T> out = model.Forward(tape, batch, ForwardMode{false, true, &rng});
    samples.push_back(
        OutputsToPredictions(out.logits.value().template Cast<double>(), model.config().task));
  }
  const double n = static_cast<double>(passes);
  McPrediction r{nn::Tensor<double>(samples[0].shape()), nn::Tensor<double>(samples[0].shape())};
  for (std::size_t i = 0; i < r.mean.size(); ++i) {
    // Deviations from the first sample keep identical passes at exactly zero.
    const double ref = samples[0][i];
    double shift = 0.0;
    for (const auto& s : samples) shift += s[i] - ref;
    shift /= n;
    double var = 0.0;
    for (const auto& s : samples) var += (s[i] - ref - shift) * (s[i] - ref - shift);
    r.mean[i] = ref + shift;
    r.std[i] = std::sqrt(var / n);
  }
  return r;
}

template class EnsembleAttention<float>;
template class EnsembleAttention<double>;
template class CrossAttnBlock<float>;
template class CrossAttnBlock<double>;
template class FiLM<float>;
template class FiLM<double>;
template class MolFM<float>;
template class MolFM<double>;
template nn::Tensor<double> Predict(const MolFM<float>&, const ModelBatch&);
template nn::Tensor<double> Predict(const MolFM<double>&, const ModelBatch&);
template McPrediction McDropoutPredict(const MolFM<float>&, const ModelBatch&, std::size_t,
                                       std::uint64_t);
template McPrediction McDropoutPredict(const MolFM<double>&, const ModelBatch&, std::size_t,
                                       std::uint64_t);

}  // namespace molfm::fusion

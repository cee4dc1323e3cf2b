// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/gradcheck.hpp"

#include <numeric>

#include "molfm/encoders/encoders.hpp"
#include "molfm/objectives/objectives.hpp"
#include "molfm/pipeline/dataset.hpp"
#include "molfm/pipeline/synthetic.hpp"

namespace molfm::pipeline {

using nn::ForwardMode;
using nn::ParameterStore;
using nn::Rng;
using nn::Tape;
using nn::Tensor;
using nn::Var;

fusion::ModelConfig TinyModelConfig(std::size_t vocab_size, std::size_t num_tasks,
                                    std::size_t context_dim) {
  fusion::ModelConfig cfg;
  cfg.enc1d = {vocab_size, 16, 2, 2, 32, molrecord::kMaxTokens, 0.1};
  cfg.enc2d = {molrecord::kAtomFeatureDim, 16, 2, 0.1};
  cfg.enc3d = {16, 2, 10.0, 8, 0.1};
  cfg.fusion_dim = 16;
  cfg.fusion_heads = 2;
  cfg.context_dim = context_dim;
  cfg.head_hidden = 8;
  cfg.num_tasks = num_tasks;
  return cfg;
}

namespace {

Tensor<double> Gaussian(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Tensor<double> t = Tensor<double>::Matrix(r, c);
  for (double& v : t.storage()) v = scale * nn::StandardNormal(rng);
  return t;
}

// Eval-mode batch norm with non-trivial statistics. Train-mode batch norm
// cancels any per-feature constant in its input, which leaves exactly-zero
// gradients (e.g. the bias of a GIN MLP unit active on every node) that a
// central difference cannot resolve; the train-mode layer is checked on its own.
void RandomizeRunningStats(ParameterStore<double>& store, Rng& rng) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (p.name.ends_with(".running_mean")) {
      for (double& v : p.value.storage()) v = 0.3 * nn::StandardNormal(rng);
    } else if (p.name.ends_with(".running_var")) {
      for (double& v : p.value.storage()) v = nn::UniformRange(rng, 0.5, 2.0);
    }
  }
}

// <out, w> for a fixed random w, so every output coordinate matters.
Var<double> Probe(Var<double> out, const Tensor<double>& w) {
  return nn::Sum(nn::MulConst(out, w));
}

class Suite {
 public:
  explicit Suite(const GradCheckOptions& opts) : opts_(opts), rng_(nn::DeriveRng(opts.seed, 99)) {}

  void Params(const std::string& name, ParameterStore<double>& store, const nn::ScalarOfParams& f,
              double eps) {
    Add(name + " (params)", eps, nn::GradCheckParameters(store, f, eps, opts_.max_per_tensor));
  }
  void Input(const std::string& name, const nn::ScalarOfInput& f, const Tensor<double>& x, double eps) {
    Add(name + " (input)", eps, nn::GradCheck(f, x, eps));
  }

  Rng& rng() { return rng_; }
  const GradCheckOptions& opts() const { return opts_; }
  GradCheckReport Take() { return std::move(report_); }

 private:
  void Add(std::string name, double eps, const nn::GradCheckResult& r) {
    report_.coordinates += r.coordinates;
    if (r.max_rel_error >= report_.max_rel_error) {
      report_.max_rel_error = r.max_rel_error;
      report_.worst = name + ": " + r.worst;
    }
    report_.entries.push_back({std::move(name), eps, r});
  }

  GradCheckOptions opts_;
  Rng rng_;
  GradCheckReport report_;
};

void PrimitiveLayers(Suite& s) {
  const double eps = s.opts().layer_eps;
  Rng& rng = s.rng();
  const std::size_t n = 5, d = 6;
  const Tensor<double> x = Gaussian(rng, n, d);
  {
    ParameterStore<double> store;
    nn::Linear<double> lin(store, "linear", d, 4, rng);
    for (double& v : store.At("linear.bias").value.storage()) v = nn::StandardNormal(rng);
    const Tensor<double> w = Gaussian(rng, n, 4);
    s.Input("linear", [&](Tape<double>& t, Var<double> in) { return Probe(lin(t, in), w); }, x, eps);
    s.Params("linear", store, [&](Tape<double>& t) { return Probe(lin(t, t.Constant(x)), w); }, eps);
  }
  {
    ParameterStore<double> store;
    nn::LayerNormLayer<double> ln(store, "layer_norm", d);
    for (std::size_t i = 0; i < store.size(); ++i) {
      for (double& v : store[i].value.storage()) v += 0.3 * nn::StandardNormal(rng);
    }
    const Tensor<double> w = Gaussian(rng, n, d);
    s.Input("layer_norm", [&](Tape<double>& t, Var<double> in) { return Probe(ln(t, in), w); }, x, eps);
    s.Params("layer_norm", store, [&](Tape<double>& t) { return Probe(ln(t, t.Constant(x)), w); }, eps);
  }
  {
    ParameterStore<double> store;
    nn::BatchNormLayer<double> bn(store, "batch_norm", d);
    const Tensor<double> w = Gaussian(rng, n, d);
    const ForwardMode train{true, false, nullptr};
    s.Input("batch_norm", [&](Tape<double>& t, Var<double> in) { return Probe(bn(t, in, train), w); }, x, eps);
    s.Params("batch_norm", store, [&](Tape<double>& t) { return Probe(bn(t, t.Constant(x), train), w); }, eps);
    const ForwardMode eval{};
    s.Input("batch_norm eval", [&](Tape<double>& t, Var<double> in) { return Probe(bn(t, in, eval), w); }, x, eps);
  }
  {
    ParameterStore<double> store;
    nn::Embedding<double> emb(store, "embedding", 7, d, rng);
    const std::vector<std::size_t> ids = {0, 3, 3, 6, 1};
    const Tensor<double> w = Gaussian(rng, ids.size(), d);
    s.Params("embedding", store, [&](Tape<double>& t) { return Probe(emb(t, ids), w); }, eps);
  }
  {
    // Two sequences of length 4, the second with one padded key.
    const std::size_t b = 2, len = 4, heads = 2;
    const Tensor<double> qkv = Gaussian(rng, b * len, d);
    const std::vector<std::uint8_t> valid = {1, 1, 1, 1, 1, 1, 1, 0};
    const Tensor<double> w = Gaussian(rng, b * len, d);
    s.Input("multi_head_attention",
            [&](Tape<double>&, Var<double> in) {
              return Probe(nn::MultiHeadAttention(in, nn::Scale(in, 0.7), nn::Scale(in, -1.3), b, len, len,
                                                  heads, valid),
                           w);
            },
            qkv, eps);
  }
  {
    const Tensor<double> w = Gaussian(rng, n, d);
    s.Input("shifted_softplus", [&](Tape<double>&, Var<double> in) { return Probe(nn::ShiftedSoftplus(in), w); },
            x, eps);
    s.Input("l2_normalize", [&](Tape<double>&, Var<double> in) { return Probe(nn::L2NormalizeRows(in), w); },
            x, eps);
    const std::vector<std::size_t> offsets = {0, 2, 5};
    const Tensor<double> col = Gaussian(rng, 5, 1);
    const Tensor<double> wc = Gaussian(rng, 5, 1);
    s.Input("segment_softmax",
            [&](Tape<double>&, Var<double> in) { return Probe(nn::SegmentSoftmax(in, offsets), wc); }, col, eps);
  }
}

void EncoderLayers(Suite& s, const std::vector<const encoders::MoleculeInputs*>& mols) {
  const double eps = s.opts().layer_eps;
  Rng& rng = s.rng();
  const encoders::GraphBatch g = encoders::BuildGraphBatch(mols);
  const std::size_t d = 8;
  {
    ParameterStore<double> store;
    encoders::GinLayer<double> gin(store, "gin", d, rng);
    store.At("gin.eps").value.Fill(0.25);
    for (double& v : store.At("gin.mlp1.bias").value.storage()) v = 0.1 * nn::StandardNormal(rng);
    const Tensor<double> h = Gaussian(rng, g.num_nodes(), d);
    const Tensor<double> w = Gaussian(rng, g.num_nodes(), d);
    s.Input("gin_layer", [&](Tape<double>& t, Var<double> in) { return Probe(gin(t, in, g.src, g.dst), w); }, h,
            eps);
    s.Params("gin_layer", store, [&](Tape<double>& t) { return Probe(gin(t, t.Constant(h), g.src, g.dst), w); },
             eps);
  }
  {
    std::vector<std::vector<std::size_t>> sel;
    sel.assign(mols.size(), {0});
    const encoders::ConformerBatch cb = encoders::BuildConformerBatch(mols, sel, {10.0, 8});
    ParameterStore<double> store;
    encoders::SchNetInteraction<double> inter(store, "schnet", d, 8, rng);
    const std::size_t atoms = cb.atom_conformer.size();
    const Tensor<double> h = Gaussian(rng, atoms, d);
    const Tensor<double> w = Gaussian(rng, atoms, d);
    const ForwardMode mode{};
    s.Input("schnet_interaction",
            [&](Tape<double>& t, Var<double> in) {
              return Probe(inter(t, in, t.Constant(cb.rbf), cb.pair_i, cb.pair_j, mode, 0.0), w);
            },
            h, eps);
    s.Input("schnet_interaction rbf",
            [&](Tape<double>& t, Var<double> in) {
              return Probe(inter(t, t.Constant(h), in, cb.pair_i, cb.pair_j, mode, 0.0), w);
            },
            cb.rbf, eps);
    s.Params("schnet_interaction", store,
             [&](Tape<double>& t) {
               return Probe(inter(t, t.Constant(h), t.Constant(cb.rbf), cb.pair_i, cb.pair_j, mode, 0.0), w);
             },
             eps);
  }
}

void Encoders(Suite& s, const fusion::ModelConfig& cfg,
              const std::vector<const encoders::MoleculeInputs*>& mols) {
  const double eps = s.opts().model_eps;
  Rng& rng = s.rng();
  const std::uint64_t drop_seed = s.opts().seed + 17;
  const std::size_t m = mols.size();
  {
    ParameterStore<double> store;
    encoders::Encoder1D<double> enc(store, "enc1d", cfg.enc1d, rng);
    std::vector<const molrecord::TokenSequence*> seqs;
    for (const auto* mol : mols) seqs.push_back(&mol->tokens);
    const Tensor<double> w = Gaussian(rng, m, cfg.enc1d.d_model);
    s.Params("encoder_1d", store,
             [&](Tape<double>& t) {
               Rng r(drop_seed);
               return Probe(enc(t, seqs, ForwardMode{true, true, &r}), w);
             },
             eps);
  }
  {
    ParameterStore<double> store;
    encoders::Encoder2D<double> enc(store, "enc2d", cfg.enc2d, rng);
    RandomizeRunningStats(store, rng);
    const encoders::GraphBatch g = encoders::BuildGraphBatch(mols);
    const Tensor<double> w = Gaussian(rng, m, cfg.enc2d.d_model);
    s.Params("encoder_2d", store,
             [&](Tape<double>& t) {
               Rng r(drop_seed);
               return Probe(enc(t, g, ForwardMode{false, true, &r}).pooled, w);
             },
             eps);
  }
  {
    ParameterStore<double> store;
    encoders::Encoder3D<double> enc(store, "enc3d", cfg.enc3d, rng);
    std::vector<std::vector<std::size_t>> sel;
    for (const auto* mol : mols) {
      sel.emplace_back(mol->num_conformers());
      std::iota(sel.back().begin(), sel.back().end(), 0);
    }
    const encoders::ConformerBatch cb = encoders::BuildConformerBatch(mols, sel, cfg.enc3d.rbf());
    const Tensor<double> w = Gaussian(rng, cb.num_conformers, cfg.enc3d.d_model);
    s.Params("encoder_3d", store,
             [&](Tape<double>& t) {
               Rng r(drop_seed);
               return Probe(enc(t, cb, ForwardMode{true, true, &r}), w);
             },
             eps);
  }
}

void FusionLayers(Suite& s, const std::vector<const encoders::MoleculeInputs*>& mols) {
  const double eps = s.opts().layer_eps;
  Rng& rng = s.rng();
  const std::size_t d = 6, out = 5, m = mols.size();
  {
    ParameterStore<double> store;
    fusion::EnsembleAttention<double> ens(store, "ens", d, out, rng);
    std::vector<std::size_t> offsets = {0};
    std::vector<double> prior;
    for (const auto* mol : mols) {
      offsets.push_back(offsets.back() + mol->num_conformers());
      const auto lp = molrecord::LogBoltzmannWeights(mol->energies);
      prior.insert(prior.end(), lp.begin(), lp.end());
    }
    const Tensor<double> h = Gaussian(rng, offsets.back(), d);
    const Tensor<double> w = Gaussian(rng, m, out);
    const auto f = [&](Tape<double>& t, Var<double> in) {
      return Probe(ens.Project(t, ens(t, in, offsets, prior, true).pooled), w);
    };
    s.Input("ensemble_attention", f, h, eps);
    s.Params("ensemble_attention", store, [&](Tape<double>& t) { return f(t, t.Constant(h)); }, eps);
  }
  {
    ParameterStore<double> store;
    fusion::CrossAttnBlock<double> ca(store, "ca", 8, 2, rng);
    const Tensor<double> q = Gaussian(rng, m, 8), kv = Gaussian(rng, m, 8);
    const Tensor<double> w = Gaussian(rng, m, 8);
    s.Input("cross_attention kv", [&](Tape<double>& t, Var<double> in) { return Probe(ca(t, t.Constant(q), in), w); },
            kv, eps);
    s.Params("cross_attention", store,
             [&](Tape<double>& t) { return Probe(ca(t, t.Constant(q), t.Constant(kv)), w); }, eps);
  }
  {
    ParameterStore<double> store;
    fusion::FiLM<double> film(store, "film", 3, d, rng);
    for (std::size_t i = 0; i < store.size(); ++i) {
      for (double& v : store[i].value.storage()) v += 0.2 * nn::StandardNormal(rng);
    }
    const Tensor<double> h = Gaussian(rng, m, d), c = Gaussian(rng, m, 3);
    const Tensor<double> w = Gaussian(rng, m, d);
    s.Input("film h", [&](Tape<double>& t, Var<double> in) { return Probe(film(t, in, t.Constant(c)), w); }, h, eps);
    s.Input("film context", [&](Tape<double>& t, Var<double> in) { return Probe(film(t, t.Constant(h), in), w); },
            c, eps);
    s.Params("film", store, [&](Tape<double>& t) { return Probe(film(t, t.Constant(h), t.Constant(c)), w); }, eps);
  }
}

void Losses(Suite& s) {
  const double eps = s.opts().layer_eps;
  Rng& rng = s.rng();
  const std::size_t n = 4, d = 5;
  const Tensor<double> za = Gaussian(rng, n, d), zb = Gaussian(rng, n, d), zc = Gaussian(rng, n, d);
  const double tau = 0.5;  // moderate logits keep the FD stencil well conditioned
  s.Input("info_nce", [&](Tape<double>& t, Var<double> in) { return objectives::InfoNce(in, t.Constant(zb), tau); },
          za, eps);
  const objectives::ContrastiveConfig ctr{tau, true, objectives::PairAggregation::kMean};
  s.Input("symmetric_contrastive",
          [&](Tape<double>& t, Var<double> in) {
            return objectives::SymmetricContrastive(in, t.Constant(zb), t.Constant(zc), ctr);
          },
          za, eps);
  const Tensor<double> logits = Gaussian(rng, 3, molrecord::kElementClasses);
  const std::vector<std::size_t> classes = {0, 5, 15};
  s.Input("masked_atom_loss",
          [&](Tape<double>&, Var<double> in) { return objectives::MaskedAtomLoss(in, classes); }, logits, eps);
  objectives::SupervisedTargets tg{Tensor<double>::Matrix(n, 2), Tensor<double>::Matrix(n, 2, 1.0)};
  for (std::size_t i = 0; i < n; ++i) tg.values(i, 0) = static_cast<double>(i % 2);
  for (std::size_t i = 0; i < n; ++i) tg.values(i, 1) = nn::StandardNormal(rng);
  tg.mask(1, 1) = 0.0;
  const Tensor<double> out = Gaussian(rng, n, 2);
  objectives::SupervisedTargets bin = tg;
  for (std::size_t i = 0; i < n; ++i) bin.values(i, 1) = static_cast<double>((i + 1) % 2);
  s.Input("binary_cross_entropy",
          [&](Tape<double>&, Var<double> in) { return objectives::SupervisedLoss(in, bin, fusion::TaskKind::kBinary); },
          out, eps);
  s.Input("masked_mse",
          [&](Tape<double>&, Var<double> in) {
            return objectives::SupervisedLoss(in, tg, fusion::TaskKind::kRegression);
          },
          out, eps);
}

void Models(Suite& s, const PreparedDataset& data) {
  const double eps = s.opts().model_eps;
  const std::uint64_t drop_seed = s.opts().seed + 23;
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const fusion::ModelBatch batch = data.Batch(all);
  const auto targets = data.Targets(all);
  const fusion::ModelConfig cfg = TinyModelConfig(data.vocab().size(), data.num_tasks(), data.context_dim());
  {
    ParameterStore<double> store;
    Rng init = nn::DeriveRng(s.opts().seed, 5);
    fusion::MolFM<double> model(store, cfg, fusion::OptionsFor(fusion::Variant::kFull), init);
    RandomizeRunningStats(store, init);
    s.Params("model_finetune", store,
             [&](Tape<double>& t) {
               Rng r(drop_seed);
               const auto out = model.Forward(t, batch, ForwardMode{false, true, &r});
               return objectives::SupervisedLoss(out.logits, targets, cfg.task);
             },
             eps);
  }
  {
    ParameterStore<double> store;
    Rng init = nn::DeriveRng(s.opts().seed, 6);
    fusion::MolFM<double> model(store, cfg, fusion::OptionsFor(fusion::Variant::kFull), init);
    objectives::PretrainHeads<double> heads(store, cfg, 8, init);
    RandomizeRunningStats(store, init);
    Rng mask_rng = nn::DeriveRng(s.opts().seed, 7);
    const objectives::AtomMask mask = objectives::MaskAtoms(batch.mols, {0.3}, mask_rng);
    fusion::ModelBatch masked = batch;
    masked.masked = mask.masked;
    const objectives::ContrastiveConfig ctr{0.5, true, objectives::PairAggregation::kMean};
    s.Params("model_pretrain", store,
             [&](Tape<double>& t) {
               Rng r(drop_seed);
               const auto out = model.Forward(t, masked, ForwardMode{false, true, &r});
               return heads(t, out, mask, ctr, {0.5}).total;
             },
             eps);
  }
}

}  // namespace

GradCheckReport RunGradCheckSuite(const GradCheckOptions& opts) {
  Suite s(opts);
  SyntheticConfig sc;
  sc.topologies = 2;
  sc.conformers = opts.conformers;
  sc.min_atoms = 3;
  sc.max_atoms = 5;
  sc.energy_spread = 0.6;
  sc.seed = opts.seed + 1;
  auto records = SyntheticGeometricDataset(sc);
  // Two tasks (one label missing) and a small context vector.
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].labels.push_back(i == 1 ? std::nullopt : std::optional<double>((i / 2) % 2));
    records[i].context = {nn::UniformRange(s.rng(), -1, 1), nn::UniformRange(s.rng(), -1, 1)};
  }
  auto vocab = VocabFor(records);
  const PreparedDataset data(std::move(records), std::move(vocab));
  std::vector<const encoders::MoleculeInputs*> mols;
  for (const auto& in : data.inputs()) mols.push_back(&in);
  const fusion::ModelConfig cfg = TinyModelConfig(data.vocab().size(), data.num_tasks(), data.context_dim());

  PrimitiveLayers(s);
  EncoderLayers(s, mols);
  Encoders(s, cfg, mols);
  FusionLayers(s, mols);
  Losses(s);
  Models(s, data);
  return s.Take();
}

}  // namespace molfm::pipeline

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "molfm/fusion/model.hpp"
#include "molfm/molrecord/features.hpp"
#include "molfm/nn/grad_check.hpp"
#include "random_molecules.hpp"

namespace molfm::fusion {
namespace {

using nn::ForwardMode;
using nn::ParameterStore;
using nn::Rng;
using nn::Tape;
using nn::Tensor;
using testing::MaxAbsDiff;
using testing::ValueOf;

// Owns featurized inputs and the batch that points into them.
struct Fixture {
  std::vector<molrecord::MoleculeRecord> records;
  std::vector<encoders::MoleculeInputs> inputs;
  ModelBatch batch;

  Fixture(Rng& rng, std::size_t m, std::size_t k, std::size_t tasks = 1, std::size_t cdim = 0) {
    const auto vocab = testing::TokenVocab();
    for (std::size_t i = 0; i < m; ++i) {
      records.push_back(testing::RandomRecord(rng, 2 + nn::UniformIndex(rng, 8), k,
                                              "mol-" + std::to_string(i), tasks, cdim));
      inputs.push_back(encoders::Featurize(records.back(), vocab));
    }
    for (const auto& in : inputs) batch.mols.push_back(&in);
    batch.context = Tensor<double>::Matrix(m, cdim);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < cdim; ++c) batch.context(i, c) = records[i].context[c];
    }
  }
};

std::size_t VocabSize() { return testing::TokenVocab().size(); }

TEST(VariantTest, NamesRoundTrip) {
  const auto all = AllVariants();
  EXPECT_EQ(all.size(), 13u);
  for (Variant v : all) EXPECT_EQ(ParseVariant(VariantName(v)), v);
  EXPECT_EQ(ParseVariant("no_cross_attn"), Variant::kConcatOnly);
  EXPECT_EQ(ParseVariant("no_cross_attention"), Variant::kConcatOnly);
  EXPECT_THROW(ParseVariant("only_4d"), std::invalid_argument);
  EXPECT_FALSE(OptionsFor(Variant::kOnly1D).use_2d);
  EXPECT_FALSE(OptionsFor(Variant::kOnly1D).use_3d);
  EXPECT_TRUE(OptionsFor(Variant::kOnly1D).use_1d);
  EXPECT_EQ(OptionsFor(Variant::kK1Conformer).ensemble, EnsembleMode::kSingle);
  EXPECT_FALSE(OptionsFor(Variant::kNoFilm).film);
}

struct EnsembleCase {
  ParameterStore<double> store;
  Rng rng{21};
  EnsembleAttention<double> ens{store, "ens", 8, 16, rng};
};

Tensor<double> RandomMatrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor<double> t = Tensor<double>::Matrix(r, c);
  for (double& v : t.storage()) v = nn::StandardNormal(rng);
  return t;
}

TEST(EnsembleAttentionTest, ZeroQueryGivesBoltzmann) {
  EnsembleCase e;
  e.ens.query().value.Fill(0.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + nn::UniformIndex(e.rng, 6);
    std::vector<double> energies(k);
    for (double& v : energies) v = nn::UniformRange(e.rng, -3, 3);
    Tape<double> tape;
    const auto out = e.ens(tape, tape.Constant(RandomMatrix(e.rng, k, 8)), {0, k},
                           molrecord::LogBoltzmannWeights(energies), true);
    const auto p = molrecord::BoltzmannWeights(energies);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(out.alpha.value()[i], p[i], 1e-12);
  }
}

TEST(EnsembleAttentionTest, EqualEnergiesGiveMean) {
  EnsembleCase e;
  e.ens.query().value.Fill(0.0);
  const auto h = RandomMatrix(e.rng, 4, 8);
  Tape<double> tape;
  const auto out = e.ens(tape, tape.Constant(h), {0, 4},
                         molrecord::LogBoltzmannWeights(std::vector<double>(4, -1.5)), true);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out.alpha.value()[i], 0.25, 1e-15);
  for (std::size_t d = 0; d < 8; ++d) {
    const double mean = (h(0, d) + h(1, d) + h(2, d) + h(3, d)) / 4.0;
    EXPECT_NEAR(out.pooled.value()[d], mean, 1e-14);
  }
}

TEST(EnsembleAttentionTest, SingleConformerIsIdentity) {
  EnsembleCase e;
  const auto h = RandomMatrix(e.rng, 1, 8);
  for (bool prior : {true, false}) {
    Tape<double> tape;
    const auto out = e.ens(tape, tape.Constant(h), {0, 1}, {0.0}, prior);
    EXPECT_EQ(out.alpha.value()[0], 1.0);
    EXPECT_LE(MaxAbsDiff(out.pooled.value(), h), 1e-15);
  }
}

TEST(EnsembleAttentionTest, PermutationAndShiftInvariance) {
  EnsembleCase e;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + nn::UniformIndex(e.rng, 5);
    const auto h = RandomMatrix(e.rng, k, 8);
    std::vector<double> energies(k);
    for (double& v : energies) v = nn::UniformRange(e.rng, -2, 2);
    const auto perm = testing::RandomPermutation(e.rng, k);
    Tensor<double> hp = h;
    std::vector<double> ep(k), shifted(k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t d = 0; d < 8; ++d) hp(i, d) = h(perm[i], d);
      ep[i] = energies[perm[i]];
      shifted[i] = energies[i] + 123.4;
    }
    Tape<double> tape;
    const auto a = e.ens(tape, tape.Constant(h), {0, k}, molrecord::LogBoltzmannWeights(energies), true);
    const auto b = e.ens(tape, tape.Constant(hp), {0, k}, molrecord::LogBoltzmannWeights(ep), true);
    const auto c = e.ens(tape, tape.Constant(h), {0, k}, molrecord::LogBoltzmannWeights(shifted), true);
    EXPECT_LE(MaxAbsDiff(a.pooled.value(), b.pooled.value()), 1e-12);
    EXPECT_LE(MaxAbsDiff(a.alpha.value(), c.alpha.value()), 1e-12);
    double sum = 0.0;
    for (double v : a.alpha.value().storage()) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(EnsembleAttentionTest, Errors) {
  EnsembleCase e;
  Tape<double> tape;
  auto h = tape.Constant(RandomMatrix(e.rng, 3, 8));
  EXPECT_THROW(e.ens(tape, h, {0, 3}, {0.0, 0.0}, true), std::invalid_argument);
  EXPECT_THROW(e.ens(tape, h, {0, 0, 3}, {0.0, 0.0, 0.0}, true), std::invalid_argument);
  EXPECT_THROW(molrecord::LogBoltzmannWeights({}), std::invalid_argument);
}

TEST(CrossAttnTest, SingleKeyIsValueProjection) {
  ParameterStore<double> store;
  Rng rng(22);
  CrossAttnBlock<double> block(store, "ca", 16, 2, rng);
  const auto q1 = RandomMatrix(rng, 3, 16);
  const auto q2 = RandomMatrix(rng, 3, 16);
  const auto kv = RandomMatrix(rng, 3, 16);
  Tape<double> tape;
  const auto a = ValueOf(block(tape, tape.Constant(q1), tape.Constant(kv)));
  const auto b = ValueOf(block(tape, tape.Constant(q2), tape.Constant(kv)));
  EXPECT_EQ(a.rows(), 3u);
  EXPECT_EQ(a.cols(), 16u);
  EXPECT_LE(MaxAbsDiff(a, b), 1e-12);  // the query cannot change a singleton softmax
  // Oracle: o(v(kv)) computed directly.
  const auto& v = store.At("ca.v.weight").value;
  const auto& vb = store.At("ca.v.bias").value;
  const auto& o = store.At("ca.o.weight").value;
  const auto& ob = store.At("ca.o.bias").value;
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<double> val(16);
    for (std::size_t j = 0; j < 16; ++j) {
      val[j] = vb[j];
      for (std::size_t i = 0; i < 16; ++i) val[j] += kv(r, i) * v(i, j);
    }
    for (std::size_t j = 0; j < 16; ++j) {
      double out = ob[j];
      for (std::size_t i = 0; i < 16; ++i) out += val[i] * o(i, j);
      EXPECT_NEAR(a(r, j), out, 1e-12);
    }
  }
}

TEST(CrossAttnTest, ZeroOutputProjection) {
  ParameterStore<double> store;
  Rng rng(23);
  CrossAttnBlock<double> block(store, "ca", 16, 4, rng);
  block.output().weight().value.Fill(0.0);
  block.output().bias()->value.Fill(0.0);
  Tape<double> tape;
  const auto out = block(tape, tape.Constant(RandomMatrix(rng, 2, 16)),
                         tape.Constant(RandomMatrix(rng, 2, 16)));
  for (double v : out.value().storage()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(block(tape, tape.Constant(RandomMatrix(rng, 2, 8)),
                     tape.Constant(RandomMatrix(rng, 2, 16))),
               std::invalid_argument);
  EXPECT_THROW(CrossAttnBlock<double>(store, "bad", 16, 3, rng), std::invalid_argument);
}

TEST(FiLMTest, IdentityAtInitWithZeroContext) {
  ParameterStore<double> store;
  Rng rng(24);
  FiLM<double> film(store, "film", 3, 16, rng);
  const auto h = RandomMatrix(rng, 4, 16);
  Tape<double> tape;
  const auto out = film(tape, tape.Constant(h), tape.Constant(Tensor<double>::Matrix(4, 3)));
  EXPECT_EQ(out.value(), h);
  EXPECT_THROW(film(tape, tape.Constant(h), tape.Constant(Tensor<double>::Matrix(4, 2))),
               std::invalid_argument);
}

TEST(FiLMTest, NoContextIsIdentityAtInit) {
  ParameterStore<double> store;
  Rng rng(25);
  FiLM<double> film(store, "film", 0, 16, rng);
  const auto h = RandomMatrix(rng, 2, 16);
  Tape<double> tape;
  const auto out = film(tape, tape.Constant(h), tape.Constant(Tensor<double>::Matrix(2, 0)));
  EXPECT_EQ(out.value(), h);
}

TEST(FiLMTest, GammaTwoDoubles) {
  ParameterStore<double> store;
  Rng rng(26);
  FiLM<double> film(store, "film", 2, 8, rng);
  film.gamma().weight().value.Fill(0.0);
  film.gamma().bias()->value.Fill(2.0);
  film.beta().weight().value.Fill(0.0);
  const auto h = RandomMatrix(rng, 3, 8);
  auto c = RandomMatrix(rng, 3, 2);
  Tape<double> tape;
  const auto out = film(tape, tape.Constant(h), tape.Constant(c));
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(out.value()[i], 2.0 * h[i]);
}

std::unique_ptr<MolFM<double>> MakeModel(ParameterStore<double>& store, Variant v,
                                         std::size_t tasks = 1, std::size_t cdim = 0,
                                         std::uint64_t seed = 30) {
  Rng rng(seed);
  return std::make_unique<MolFM<double>>(store, testing::TinyConfig(VocabSize(), tasks, cdim),
                                         OptionsFor(v), rng);
}

TEST(MolFMTest, OutputShapesAndFinite) {
  Rng rng(31);
  Fixture fx(rng, 5, 3, 2, 3);
  for (Variant v : AllVariants()) {
    ParameterStore<double> store;
    auto model = MakeModel(store, v, 2, 3);
    Tape<double> tape;
    const auto out = model->Forward(tape, fx.batch, ForwardMode{});
    ASSERT_EQ(out.logits.rows(), 5u) << VariantName(v);
    ASSERT_EQ(out.logits.cols(), 2u);
    EXPECT_EQ(out.fused.cols(), 16u);
    for (double x : out.logits.value().storage()) EXPECT_TRUE(std::isfinite(x));
  }
}

TEST(MolFMTest, ZeroCrossAttentionEqualsConcatOnly) {
  Rng rng(32);
  Fixture fx(rng, 4, 3);
  ParameterStore<double> s1, s2;
  auto full = MakeModel(s1, Variant::kFull);
  auto concat = MakeModel(s2, Variant::kConcatOnly);
  for (std::size_t i = 0; i < 3; ++i) {
    full->cross(i).output().weight().value.Fill(0.0);
    full->cross(i).output().bias()->value.Fill(0.0);
  }
  s2.Restore(s1.Snapshot());
  const auto a = Predict(*full, fx.batch);
  const auto b = Predict(*concat, fx.batch);
  EXPECT_EQ(a, b);
}

TEST(MolFMTest, MissingModalitySlotsAreZero) {
  Rng rng(33);
  Fixture fx(rng, 3, 2);
  ParameterStore<double> store;
  auto model = MakeModel(store, Variant::kOnly1D);
  // Weights reading the 2D and 3D slots of the concatenation cannot matter.
  Tape<double> t1;
  const auto before = ValueOf(model->Forward(t1, fx.batch, ForwardMode{}).logits);
  auto& w = store.At("fuse.fc1.weight").value;
  for (std::size_t r = 16; r < 48; ++r) {
    for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) = 7.0;
  }
  Tape<double> t2;
  const auto out = model->Forward(t2, fx.batch, ForwardMode{});
  EXPECT_EQ(ValueOf(out.logits), before);
  for (double v : out.h2d.value().storage()) EXPECT_EQ(v, 0.0);
  for (double v : out.h3d_proj.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(MolFMTest, NoFilmBypass) {
  Rng rng(34);
  Fixture fx(rng, 3, 2, 1, 2);
  ParameterStore<double> store;
  auto model = MakeModel(store, Variant::kNoFilm, 1, 2);
  Tape<double> tape;
  const auto out = model->Forward(tape, fx.batch, ForwardMode{});
  EXPECT_EQ(out.conditioned.value(), out.fused.value());
}

TEST(MolFMTest, ConformerSelection) {
  Rng rng(35);
  Fixture fx(rng, 4, 5);
  ParameterStore<double> s1, s2, s3;
  auto single = MakeModel(s1, Variant::kK1Conformer);
  auto random = MakeModel(s2, Variant::kRandomConformer);
  auto full = MakeModel(s3, Variant::kFull);
  for (const auto& in : fx.inputs) {
    const auto sel = single->SelectConformers(in);
    ASSERT_EQ(sel.size(), 1u);
    for (double e : in.energies) EXPECT_LE(in.energies[sel[0]], e);
    const auto r = random->SelectConformers(in);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r, random->SelectConformers(in));
    EXPECT_EQ(full->SelectConformers(in).size(), in.num_conformers());
  }
  Tape<double> tape;
  const auto out = single->Forward(tape, fx.batch, ForwardMode{});
  for (double a : out.alpha.value().storage()) EXPECT_EQ(a, 1.0);
}

TEST(MolFMTest, BatchCompositionDoesNotLeak) {
  Rng rng(36);
  Fixture fx(rng, 4, 3);
  ParameterStore<double> store;
  auto model = MakeModel(store, Variant::kFull);
  const auto all = Predict(*model, fx.batch);
  ModelBatch one;
  one.mols = {fx.batch.mols[2]};
  one.context = Tensor<double>::Matrix(1, 0);
  const auto alone = Predict(*model, one);
  EXPECT_NEAR(alone[0], all[2], 1e-10);
}

TEST(MolFMTest, FullModelGradCheck) {
  Rng rng(37);
  Fixture fx(rng, 3, 3, 2, 2);
  // Near-degenerate ensembles make the query gradient vanish below FD noise.
  for (auto& in : fx.inputs) {
    for (double& e : in.energies) e = nn::UniformRange(rng, -0.3, 0.3);
    for (auto& conf : in.conformers) {
      for (auto& xyz : conf) {
        for (double& v : xyz) v += nn::UniformRange(rng, -1.0, 1.0);
      }
    }
  }
  ParameterStore<double> store;
  auto model = MakeModel(store, Variant::kFull, 2, 2);
  Tensor<double> targets = Tensor<double>::Matrix(3, 2);
  Tensor<double> mask = Tensor<double>::Matrix(3, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    targets(i, 0) = static_cast<double>(i % 2);
    mask(i, 0) = 1.0;
  }
  const auto loss = [&](Tape<double>& tape) {
    Rng drop(99);
    const auto out = model->Forward(tape, fx.batch, ForwardMode{true, true, &drop});
    return nn::BinaryCrossEntropyWithLogits(out.logits, targets, mask);
  };
  const auto r = nn::GradCheckParameters(store, loss, 1e-4, 8);
  EXPECT_LT(r.max_rel_error, 1e-4)
      << r.worst << " tape " << r.worst_analytic << " fd " << r.worst_numeric;
  EXPECT_GT(r.coordinates, 100u);
}

TEST(McDropoutTest, ZeroDropoutIsDeterministic) {
  Rng rng(38);
  Fixture fx(rng, 3, 2);
  ParameterStore<double> store;
  auto cfg = testing::TinyConfig(VocabSize());
  cfg.enc1d.dropout = cfg.enc2d.dropout = cfg.enc3d.dropout = cfg.head_dropout = 0.0;
  Rng init(39);
  MolFM<double> model(store, cfg, ModelOptions{}, init);
  const auto mc = McDropoutPredict(model, fx.batch, 5, 7);
  const auto det = Predict(model, fx.batch);
  for (std::size_t i = 0; i < det.size(); ++i) {
    EXPECT_EQ(mc.std[i], 0.0);
    EXPECT_NEAR(mc.mean[i], det[i], 1e-15);
  }
}

TEST(McDropoutTest, SinglePassAndErrors) {
  Rng rng(40);
  Fixture fx(rng, 2, 2);
  ParameterStore<double> store;
  auto model = MakeModel(store, Variant::kFull);
  const auto mc = McDropoutPredict(*model, fx.batch, 1, 3);
  for (double s : mc.std.storage()) EXPECT_EQ(s, 0.0);
  for (double p : mc.mean.storage()) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_THROW(McDropoutPredict(*model, fx.batch, 0, 3), std::invalid_argument);
}

TEST(McDropoutTest, DefaultModelHasPositiveSpreadAndIsSeeded) {
  Rng rng(41);
  Fixture fx(rng, 2, 2);
  ParameterStore<float> store;
  fusion::ModelConfig cfg;
  cfg.enc1d.vocab_size = VocabSize();
  Rng init(42);
  MolFM<float> model(store, cfg, ModelOptions{}, init);
  const auto a = McDropoutPredict(model, fx.batch, 20, 11);
  const auto b = McDropoutPredict(model, fx.batch, 20, 11);
  double max_std = 0.0;
  for (double s : a.std.storage()) max_std = std::max(max_std, s);
  EXPECT_GT(max_std, 0.0);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
}

}  // namespace
}  // namespace molfm::fusion

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "molfm/nn/grad_check.hpp"
#include "molfm/objectives/objectives.hpp"
#include "random_molecules.hpp"

namespace molfm::objectives {
namespace {

using nn::Rng;
using nn::Tape;
using nn::Tensor;

Tensor<double> RandomMatrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor<double> t = Tensor<double>::Matrix(r, c);
  for (double& v : t.storage()) v = nn::StandardNormal(rng);
  return t;
}

// Scalar reference: normalizes rows, then the mean negative log-softmax of
// the diagonal of A B^T / tau.
double InfoNceReference(const Tensor<double>& a, const Tensor<double>& b, double tau) {
  const std::size_t n = a.rows(), d = a.cols();
  auto unit = [&](const Tensor<double>& x, std::size_t r) {
    std::vector<double> v(d);
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += x(r, c) * x(r, c);
    for (std::size_t c = 0; c < d; ++c) v[c] = x(r, c) / std::sqrt(ss);
    return v;
  };
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ai = unit(a, i);
    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto bj = unit(b, j);
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += ai[c] * bj[c];
      s[j] = dot / tau;
    }
    double denom = 0.0;
    for (double v : s) denom += std::exp(v);
    loss -= std::log(std::exp(s[i]) / denom);
  }
  return loss / static_cast<double>(n);
}

double Eval(const Tensor<double>& a, const Tensor<double>& b, double tau, bool normalize = true) {
  Tape<double> tape;
  return InfoNce(tape.Constant(a), tape.Constant(b), tau, normalize).value()[0];
}

TEST(InfoNceTest, IdenticalRowsGiveLogN) {
  for (std::size_t n : {2, 4, 8}) {
    Tensor<double> z = Tensor<double>::Matrix(n, 5);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 5; ++c) z(i, c) = 0.3 + 0.1 * static_cast<double>(c);
    }
    EXPECT_NEAR(Eval(z, z, 0.07), std::log(static_cast<double>(n)), 1e-6) << n;
  }
  Tensor<double> z = Tensor<double>::Matrix(2, 3);
  z.Fill(1.0);
  EXPECT_NEAR(Eval(z, z, 0.07), 0.6931, 1e-4);
}

TEST(InfoNceTest, OrthonormalClosedForm) {
  const double tau = 0.07;
  for (std::size_t n : {2, 4, 8}) {
    Tensor<double> z = Tensor<double>::Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) z(i, i) = 1.0;
    const double closed = std::log(1.0 + static_cast<double>(n - 1) * std::exp(-1.0 / tau));
    EXPECT_NEAR(Eval(z, z, tau), closed, 1e-12);
    EXPECT_NEAR(Eval(z, z, tau), 0.0, 1e-5);
  }
}

TEST(InfoNceTest, MatchesReference) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + nn::UniformIndex(rng, 7);
    const auto a = RandomMatrix(rng, n, 6);
    const auto b = RandomMatrix(rng, n, 6);
    const double tau = nn::UniformRange(rng, 0.05, 1.0);
    EXPECT_NEAR(Eval(a, b, tau), InfoNceReference(a, b, tau), 1e-10);
  }
}

TEST(InfoNceTest, JointRowPermutationInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + nn::UniformIndex(rng, 7);
    const auto a = RandomMatrix(rng, n, 4);
    const auto b = RandomMatrix(rng, n, 4);
    const auto perm = testing::RandomPermutation(rng, n);
    Tensor<double> ap = a, bp = b;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        ap(i, c) = a(perm[i], c);
        bp(i, c) = b(perm[i], c);
      }
    }
    EXPECT_NEAR(Eval(a, b, 0.07), Eval(ap, bp, 0.07), 1e-10);
  }
}

TEST(InfoNceTest, NonNegativeAndLogNOnlyWhenRowsFlat) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + nn::UniformIndex(rng, 5);
    const double l = Eval(RandomMatrix(rng, n, 3), RandomMatrix(rng, n, 3), 0.5);
    EXPECT_GE(l, 0.0);
    EXPECT_GT(std::abs(l - std::log(static_cast<double>(n))), 1e-9);
  }
}

TEST(InfoNceTest, MonotoneInTrueSimilarity) {
  // Raw logits: za = I, zb row 0 = t e_0 + fixed off-diagonal entries, so only
  // the (0, 0) similarity varies with t.
  Rng rng(4);
  const std::size_t n = 4;
  Tensor<double> za = Tensor<double>::Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) za(i, i) = 1.0;
  Tensor<double> zb = RandomMatrix(rng, n, n);
  double prev = 1e300;
  for (double t = -3.0; t <= 3.0; t += 0.25) {
    zb(0, 0) = t;
    const double l = Eval(za, zb, 1.0, /*normalize=*/false);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(InfoNceTest, Errors) {
  Tensor<double> one = Tensor<double>::Matrix(1, 3);
  one.Fill(1.0);
  EXPECT_THROW(Eval(one, one, 0.07), std::invalid_argument);
  Tensor<double> z = Tensor<double>::Matrix(2, 3);
  z(0, 0) = 1.0;  // row 1 stays zero
  EXPECT_THROW(Eval(z, z, 0.07), std::invalid_argument);
  Tensor<double> y = Tensor<double>::Matrix(2, 3);
  y.Fill(1.0);
  EXPECT_THROW(Eval(y, y, 0.0), std::invalid_argument);
  EXPECT_THROW(Eval(y, Tensor<double>::Matrix(3, 3), 0.07), std::invalid_argument);
}

TEST(InfoNceTest, Gradient) {
  Rng rng(5);
  for (int seed = 0; seed < 10; ++seed) {
    const auto a = RandomMatrix(rng, 4, 5);
    const auto b = RandomMatrix(rng, 4, 5);
    const auto ra = nn::GradCheck(
        [&](Tape<double>& t, nn::Var<double> x) { return InfoNce(x, t.Constant(b), 0.3); }, a);
    const auto rb = nn::GradCheck(
        [&](Tape<double>& t, nn::Var<double> x) { return InfoNce(t.Constant(a), x, 0.3); }, b);
    EXPECT_LT(ra.max_rel_error, 1e-4) << ra.worst;
    EXPECT_LT(rb.max_rel_error, 1e-4) << rb.worst;
  }
}

double Symmetric(const Tensor<double>& a, const Tensor<double>& b, const Tensor<double>& c,
                 const ContrastiveConfig& cfg = {}) {
  Tape<double> tape;
  return SymmetricContrastive(tape.Constant(a), tape.Constant(b), tape.Constant(c), cfg)
      .value()[0];
}

TEST(SymmetricContrastiveTest, IdenticalGivesLogN) {
  Tensor<double> z = Tensor<double>::Matrix(4, 3);
  z.Fill(0.5);
  EXPECT_NEAR(Symmetric(z, z, z), std::log(4.0), 1e-6);
}

TEST(SymmetricContrastiveTest, MeanOfSixDirectedPairs) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = RandomMatrix(rng, 2, 4);
    const auto b = RandomMatrix(rng, 2, 4);
    const auto c = RandomMatrix(rng, 2, 4);
    const double tau = 0.07;
    const double six = InfoNceReference(a, b, tau) + InfoNceReference(b, a, tau) +
                       InfoNceReference(a, c, tau) + InfoNceReference(c, a, tau) +
                       InfoNceReference(b, c, tau) + InfoNceReference(c, b, tau);
    EXPECT_NEAR(Symmetric(a, b, c), six / 6.0, 1e-9);
    ContrastiveConfig sum;
    sum.aggregation = PairAggregation::kSum;
    EXPECT_NEAR(Symmetric(a, b, c, sum), six, 1e-9);
    // Argument order does not matter.
    EXPECT_NEAR(Symmetric(a, b, c), Symmetric(c, a, b), 1e-12);
    EXPECT_NEAR(Symmetric(a, b, c), Symmetric(b, a, c), 1e-12);
  }
}

TEST(SymmetricContrastiveTest, AggregationNames) {
  EXPECT_EQ(ParsePairAggregation("mean"), PairAggregation::kMean);
  EXPECT_EQ(ParsePairAggregation("sum"), PairAggregation::kSum);
  EXPECT_EQ(PairAggregationName(PairAggregation::kSum), "sum");
  EXPECT_THROW(ParsePairAggregation("max"), std::invalid_argument);
}

TEST(SymmetricContrastiveTest, Gradient) {
  Rng rng(7);
  const auto b = RandomMatrix(rng, 3, 4);
  const auto c = RandomMatrix(rng, 3, 4);
  const auto r = nn::GradCheck(
      [&](Tape<double>& t, nn::Var<double> x) {
        return SymmetricContrastive(x, t.Constant(b), t.Constant(c), ContrastiveConfig{});
      },
      RandomMatrix(rng, 3, 4));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

struct MaskFixture {
  std::vector<molrecord::MoleculeRecord> records;
  std::vector<encoders::MoleculeInputs> inputs;
  std::vector<const encoders::MoleculeInputs*> mols;

  MaskFixture(Rng& rng, std::vector<std::size_t> sizes) {
    const auto vocab = testing::TokenVocab();
    for (std::size_t n : sizes) {
      records.push_back(testing::RandomRecord(rng, n, 1, "m" + std::to_string(records.size())));
      inputs.push_back(encoders::Featurize(records.back(), vocab));
    }
    for (const auto& in : inputs) mols.push_back(&in);
  }
};

TEST(MaskAtomsTest, CountsFollowRoundingWithFloorOfOne) {
  Rng rng(8);
  MaskFixture fx(rng, {1, 3, 10, 20, 7});
  Rng r1(9);
  const auto m = MaskAtoms(fx.mols, {0.15}, r1);
  // round(0.15 N) with a floor of 1: 1 -> 1, 3 -> 1 (0.45), 10 -> 2 (1.5), 20 -> 3, 7 -> 1.
  const std::size_t expected[] = {1, 1, 2, 3, 1};
  std::size_t base = 0, t = 0;
  for (std::size_t g = 0; g < 5; ++g) {
    ASSERT_EQ(m.masked[g].size(), expected[g]) << g;
    EXPECT_TRUE(std::is_sorted(m.masked[g].begin(), m.masked[g].end()));
    EXPECT_EQ(std::set<std::size_t>(m.masked[g].begin(), m.masked[g].end()).size(),
              m.masked[g].size());
    for (std::size_t a : m.masked[g]) {
      EXPECT_EQ(m.target_nodes[t], base + a);
      EXPECT_EQ(m.target_classes[t], fx.inputs[g].element_class[a]);
      ++t;
    }
    base += fx.inputs[g].num_atoms();
  }
  EXPECT_EQ(t, m.target_nodes.size());
}

TEST(MaskAtomsTest, TinyFractionStillMasksOne) {
  Rng rng(10);
  MaskFixture fx(rng, {12, 5});
  const auto m = MaskAtoms(fx.mols, {1e-9}, rng);
  EXPECT_EQ(m.masked[0].size(), 1u);
  EXPECT_EQ(m.masked[1].size(), 1u);
}

TEST(MaskAtomsTest, FullFractionMasksAll) {
  Rng rng(11);
  MaskFixture fx(rng, {6});
  const auto m = MaskAtoms(fx.mols, {1.0}, rng);
  EXPECT_EQ(m.masked[0], (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(MaskAtomsTest, SeededAndRoughlyUniform) {
  Rng rng(12);
  MaskFixture fx(rng, {8});
  Rng a(5), b(5);
  EXPECT_EQ(MaskAtoms(fx.mols, {0.25}, a).masked, MaskAtoms(fx.mols, {0.25}, b).masked);
  std::vector<int> hits(8, 0);
  Rng draw(6);
  const int trials = 8000;
  for (int t = 0; t < trials; ++t) {
    const AtomMask m = MaskAtoms(fx.mols, {0.25}, draw);
    for (std::size_t n : m.masked[0]) ++hits[n];
  }
  // Each node is chosen with probability 2/8.
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(trials), 0.25, 0.03);
}

TEST(MaskAtomsTest, Errors) {
  Rng rng(13);
  MaskFixture fx(rng, {4});
  EXPECT_THROW(MaskAtoms(fx.mols, {0.0}, rng), std::invalid_argument);
  EXPECT_THROW(MaskAtoms(fx.mols, {1.5}, rng), std::invalid_argument);
  encoders::MoleculeInputs empty;
  EXPECT_THROW(MaskAtoms({&empty}, {0.15}, rng), std::invalid_argument);
}

double AtomLoss(const Tensor<double>& logits, const std::vector<std::size_t>& targets) {
  Tape<double> tape;
  return MaskedAtomLoss(tape.Constant(logits), targets).value()[0];
}

TEST(MaskedAtomLossTest, UniformLogitsGiveLog16) {
  EXPECT_NEAR(AtomLoss(Tensor<double>::Matrix(3, 16), {0, 7, 15}), std::log(16.0), 1e-12);
  EXPECT_NEAR(std::log(16.0), 2.7726, 1e-4);
}

TEST(MaskedAtomLossTest, LargeMarginAndOrder) {
  Tensor<double> logits = Tensor<double>::Matrix(3, 16);
  const std::vector<std::size_t> targets = {3, 0, 9};
  for (std::size_t i = 0; i < 3; ++i) logits(i, targets[i]) = 60.0;
  EXPECT_LT(AtomLoss(logits, targets), 1e-20);
  Rng rng(14);
  const auto random = RandomMatrix(rng, 3, 16);
  Tensor<double> swapped = random;
  for (std::size_t c = 0; c < 16; ++c) std::swap(swapped(0, c), swapped(2, c));
  EXPECT_NEAR(AtomLoss(random, {3, 0, 9}), AtomLoss(swapped, {9, 0, 3}), 1e-14);
  EXPECT_THROW(AtomLoss(Tensor<double>::Matrix(0, 16), {}), std::invalid_argument);
  EXPECT_THROW(AtomLoss(random, {1, 2}), std::invalid_argument);
}

TEST(MaskedAtomLossTest, Gradient) {
  Rng rng(15);
  const auto r = nn::GradCheck(
      [](Tape<double>&, nn::Var<double> x) { return MaskedAtomLoss(x, {1, 4, 0, 15}); },
      RandomMatrix(rng, 4, 16));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(PretrainLossTest, Weighting) {
  EXPECT_DOUBLE_EQ(PretrainLoss(1.0, 2.0, {0.5}), 2.0);
  EXPECT_DOUBLE_EQ(PretrainLoss(1.25, 0.0, {0.5}), 1.25);
  EXPECT_DOUBLE_EQ(PretrainLoss(1.25, 9.0, {0.0}), 1.25);
  EXPECT_THROW(PretrainLoss(1.0, 1.0, {-0.1}), std::invalid_argument);
  // Linear in L_map with slope lambda.
  for (double lm : {0.0, 0.7, 3.0}) {
    EXPECT_NEAR(PretrainLoss(0.4, lm + 1.0, {0.5}) - PretrainLoss(0.4, lm, {0.5}), 0.5, 1e-15);
  }
  Tape<double> tape;
  auto a = tape.Variable(Tensor<double>({1, 1}, {1.0}));
  auto b = tape.Variable(Tensor<double>({1, 1}, {2.0}));
  auto l = PretrainLoss(a, b, {0.5});
  EXPECT_DOUBLE_EQ(l.value()[0], 2.0);
  tape.Backward(l);
  EXPECT_DOUBLE_EQ((*tape.Grad(b))[0], 0.5);
  EXPECT_DOUBLE_EQ((*tape.Grad(a))[0], 1.0);
}

SupervisedTargets Targets(std::vector<std::vector<std::optional<double>>> labels) {
  std::vector<molrecord::MoleculeRecord> records(labels.size());
  std::vector<const molrecord::MoleculeRecord*> ptrs;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    records[i].id = "r" + std::to_string(i);
    records[i].labels = labels[i];
    ptrs.push_back(&records[i]);
  }
  return BuildTargets(ptrs, labels[0].size());
}

double Supervised(const Tensor<double>& logits, const SupervisedTargets& t, fusion::TaskKind k) {
  Tape<double> tape;
  return SupervisedLoss(tape.Constant(logits), t, k).value()[0];
}

TEST(SupervisedLossTest, ConfidentCorrectIsNearZero) {
  Tensor<double> logits = Tensor<double>::Matrix(3, 2);
  logits.Fill(40.0);
  EXPECT_LT(Supervised(logits, Targets({{1.0, 1.0}, {1.0, 1.0}, {1.0, 1.0}}),
                       fusion::TaskKind::kBinary),
            1e-15);
}

TEST(SupervisedLossTest, MissingTaskMatchesDroppedTask) {
  Rng rng(16);
  const auto logits = RandomMatrix(rng, 4, 2);
  Tensor<double> first = Tensor<double>::Matrix(4, 1);
  for (std::size_t i = 0; i < 4; ++i) first(i, 0) = logits(i, 0);
  const auto with_missing =
      Targets({{1.0, std::nullopt}, {0.0, std::nullopt}, {1.0, std::nullopt}, {0.0, std::nullopt}});
  const auto dropped = Targets({{1.0}, {0.0}, {1.0}, {0.0}});
  for (auto kind : {fusion::TaskKind::kBinary, fusion::TaskKind::kRegression}) {
    EXPECT_NEAR(Supervised(logits, with_missing, kind), Supervised(first, dropped, kind), 1e-15);
  }
  // Oracle for the binary value: mean of -[y log s + (1 - y) log(1 - s)].
  double bce = 0.0;
  const double y[] = {1, 0, 1, 0};
  for (std::size_t i = 0; i < 4; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-logits(i, 0)));
    bce -= y[i] * std::log(s) + (1 - y[i]) * std::log(1 - s);
  }
  EXPECT_NEAR(Supervised(first, dropped, fusion::TaskKind::kBinary), bce / 4.0, 1e-12);
}

TEST(SupervisedLossTest, RegressionExactIsZero) {
  const auto t = Targets({{1.5, -2.0}, {0.25, 3.0}});
  Tensor<double> pred({2, 2}, {1.5, -2.0, 0.25, 3.0});
  EXPECT_EQ(Supervised(pred, t, fusion::TaskKind::kRegression), 0.0);
  Tensor<double> off({2, 2}, {2.5, -2.0, 0.25, 1.0});
  EXPECT_NEAR(Supervised(off, t, fusion::TaskKind::kRegression), (1.0 + 4.0) / 4.0, 1e-15);
}

TEST(SupervisedLossTest, Errors) {
  const auto none = Targets({{std::nullopt}, {std::nullopt}});
  EXPECT_THROW(Supervised(Tensor<double>::Matrix(2, 1), none, fusion::TaskKind::kBinary),
               std::invalid_argument);
  const auto t = Targets({{1.0}, {0.0}});
  EXPECT_THROW(Supervised(Tensor<double>::Matrix(2, 2), t, fusion::TaskKind::kBinary),
               std::invalid_argument);
}

TEST(SupervisedLossTest, Gradient) {
  Rng rng(17);
  const auto t = Targets({{1.0, std::nullopt}, {0.0, 2.0}, {std::nullopt, -1.0}});
  for (auto kind : {fusion::TaskKind::kBinary, fusion::TaskKind::kRegression}) {
    const auto r = nn::GradCheck(
        [&](Tape<double>&, nn::Var<double> x) { return SupervisedLoss(x, t, kind); },
        RandomMatrix(rng, 3, 2));
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(PretrainHeadsTest, EndToEndLossesAndGradients) {
  Rng rng(18);
  MaskFixture fx(rng, {5, 7, 4});
  for (std::size_t i = 0; i < fx.records.size(); ++i) {
    fx.records[i].conformers.push_back(fx.records[i].conformers[0]);
    fx.inputs[i] = encoders::Featurize(fx.records[i], testing::TokenVocab());
  }
  nn::ParameterStore<double> store;
  const auto cfg = testing::TinyConfig(testing::TokenVocab().size());
  fusion::MolFM<double> model(store, cfg, fusion::ModelOptions{}, rng);
  PretrainHeads<double> heads(store, cfg, 8, rng);
  Rng mask_rng(19);
  const AtomMask mask = MaskAtoms(fx.mols, {0.3}, mask_rng);
  fusion::ModelBatch batch{fx.mols, Tensor<double>::Matrix(3, 0), mask.masked};
  const auto loss = [&](Tape<double>& tape) {
    Rng drop(20);
    const auto out = model.Forward(tape, batch, nn::ForwardMode{true, true, &drop});
    return heads(tape, out, mask, ContrastiveConfig{}, PretrainWeights{}).total;
  };
  Tape<double> tape;
  Rng drop(20);
  const auto out = model.Forward(tape, batch, nn::ForwardMode{true, true, &drop});
  const auto l = heads(tape, out, mask, ContrastiveConfig{}, PretrainWeights{});
  EXPECT_NEAR(l.total.value()[0], l.contrastive.value()[0] + 0.5 * l.masked_atom.value()[0],
              1e-12);
  EXPECT_GE(l.contrastive.value()[0], 0.0);
  EXPECT_NE(store.Find("pretrain.proj3d.weight"), nullptr);
  EXPECT_EQ(store.At("pretrain.proj3d.weight").value.rows(), cfg.enc3d.d_model);
  EXPECT_EQ(store.At("pretrain.atom_classifier.weight").value.cols(), 16u);
  const auto r = nn::GradCheckParameters(store, loss, 1e-4, 4);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst << " " << r.worst_analytic << " " << r.worst_numeric;
}

}  // namespace
}  // namespace molfm::objectives

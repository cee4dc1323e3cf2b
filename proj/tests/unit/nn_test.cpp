// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "molfm/nn/grad_check.hpp"
#include "molfm/nn/layers.hpp"
#include "molfm/nn/ops.hpp"
#include "molfm/nn/optim.hpp"

namespace molfm::nn {
namespace {

constexpr double kFdTolerance = 1e-4;

Tensor<double> RandomTensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.values()) x = scale * StandardNormal(rng);
  return t;
}

Parameter<double>& AddRandom(ParameterStore<double>& store, const std::string& name,
                             Shape shape, Rng& rng, double scale = 1.0) {
  Parameter<double>& p = store.Add(name, shape);
  p.value = RandomTensor(shape, rng, scale);
  return p;
}

// sum(y * w) for a fixed random w, so every output coordinate carries a
// distinct weight in the checked scalar.
Var<double> WeightedSum(Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w = RandomTensor({y.rows(), y.cols()}, rng);
  return Sum(MulConst(y, w));
}

TEST(MatMulTest, IdentityAndHandComputedProduct) {
  Tape<double> tape;
  Rng rng(1);
  Tensor<double> a = RandomTensor({3, 4}, rng);
  Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
  Var<double> prod = MatMul(tape.Constant(a), tape.Constant(eye));
  EXPECT_EQ(prod.value().storage(), a.storage());

  Var<double> small = MatMul(tape.Constant(Tensor<double>({1, 2}, {1, 2})),
                             tape.Constant(Tensor<double>({2, 1}, {3, 4})));
  ASSERT_EQ(small.value().size(), 1u);
  EXPECT_DOUBLE_EQ(small.value()[0], 11.0);
}

TEST(MatMulTest, ShapeMismatchThrows) {
  Tape<double> tape;
  EXPECT_THROW(MatMul(tape.Constant(Tensor<double>({2, 3})),
                      tape.Constant(Tensor<double>({2, 3}))),
               std::invalid_argument);
}

TEST(MatMulTest, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(2);
  const Tensor<double> b = RandomTensor({4, 3}, rng);
  const auto res = GradCheck(
      [&](Tape<double>& t, Var<double> a) { return Sum(MatMul(a, t.Constant(b))); },
      RandomTensor({2, 4}, rng));
  EXPECT_LT(res.max_rel_error, kFdTolerance);
  EXPECT_EQ(res.coordinates, 8u);
}

TEST(SoftmaxTest, SymmetricAndOverflowSafe) {
  Tape<double> tape;
  Var<double> half = SoftmaxRows(tape.Constant(Tensor<double>({1, 2}, {0.0, 0.0})));
  EXPECT_DOUBLE_EQ(half.value()[0], 0.5);
  EXPECT_DOUBLE_EQ(half.value()[1], 0.5);

  Tape<float> ftape;
  Var<float> big = SoftmaxRows(ftape.Constant(Tensor<float>({1, 2}, {1000.0f, 0.0f})));
  EXPECT_NEAR(big.value()[0], 1.0f, 1e-6f);
  EXPECT_NEAR(big.value()[1], 0.0f, 1e-6f);
  EXPECT_TRUE(std::isfinite(big.value()[0]));
}

TEST(SoftmaxTest, RowsSumToOneAndShiftInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tape<float> tape;
    Tensor<float> x = RandomTensor({5, 7}, rng, 10.0).Cast<float>();
    Tensor<float> shifted = x;
    for (auto& v : shifted.values()) v += 3.5f;
    Var<float> y = SoftmaxRows(tape.Constant(x));
    Var<float> ys = SoftmaxRows(tape.Constant(shifted));
    for (std::size_t r = 0; r < 5; ++r) {
      float s = 0.0f;
      for (std::size_t c = 0; c < 7; ++c) {
        s += y.value()(r, c);
        EXPECT_NEAR(y.value()(r, c), ys.value()(r, c), 1e-6f);
      }
      EXPECT_NEAR(s, 1.0f, 1e-6f);
    }
  }
}

TEST(GradCheckTest, SquareAtThree) {
  const auto res = GradCheck(
      [](Tape<double>&, Var<double> x) { return Sum(Mul(x, x)); },
      Tensor<double>({1, 1}, {3.0}));
  EXPECT_LT(res.max_rel_error, 1e-8);
  Tape<double> tape;
  Var<double> x = tape.Variable(Tensor<double>({1, 1}, {3.0}));
  tape.Backward(Sum(Mul(x, x)));
  EXPECT_NEAR((*tape.Grad(x))[0], 6.0, 1e-12);
}

TEST(GradCheckTest, SumOfSoftmaxHasZeroGradient) {
  Rng rng(4);
  Tape<double> tape;
  Var<double> x = tape.Variable(RandomTensor({3, 5}, rng));
  tape.Backward(Sum(SoftmaxRows(x)));
  for (double g : tape.Grad(x)->values()) EXPECT_NEAR(g, 0.0, 1e-12);
  const auto res = GradCheck([](Tape<double>&, Var<double> v) { return Sum(SoftmaxRows(v)); },
                             RandomTensor({3, 5}, rng), 1e-3);
  EXPECT_LT(res.max_rel_error, kFdTolerance);
}

TEST(GradCheckTest, NonScalarOutputThrows) {
  EXPECT_THROW(GradCheck([](Tape<double>&, Var<double> x) { return x; },
                         Tensor<double>({2, 2})),
               std::invalid_argument);
}

TEST(LayerNormTest, ConstantRowMapsToZeros) {
  Tape<double> tape;
  Var<double> x = tape.Constant(Tensor<double>({1, 4}, {2.5, 2.5, 2.5, 2.5}));
  Var<double> gain = tape.Constant(Tensor<double>({4}, 1.0));
  Var<double> bias = tape.Constant(Tensor<double>({4}, 0.0));
  for (double v : LayerNorm(x, gain, bias).value().values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNormTest, RowsAreStandardized) {
  Rng rng(5);
  Tape<double> tape;
  Var<double> y = LayerNorm(tape.Constant(RandomTensor({6, 32}, rng, 4.0)),
                            tape.Constant(Tensor<double>({32}, 1.0)),
                            tape.Constant(Tensor<double>({32}, 0.0)));
  for (std::size_t r = 0; r < 6; ++r) {
    double mean = 0.0, var = 0.0;
    for (double v : y.value().row(r)) mean += v;
    mean /= 32.0;
    for (double v : y.value().row(r)) var += (v - mean) * (v - mean);
    var /= 32.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(LayerNormTest, ZeroFeatureDimThrows) {
  Tape<double> tape;
  EXPECT_THROW(LayerNorm(tape.Constant(Tensor<double>({2, 0})),
                         tape.Constant(Tensor<double>({0})),
                         tape.Constant(Tensor<double>({0}))),
               std::invalid_argument);
}

TEST(BatchNormTest, EvalAfterRepeatedTrainingMatchesTrainOutput) {
  Rng rng(6);
  ParameterStore<double> store;
  BatchNormLayer<double> bn(store, "bn", 8);
  const Tensor<double> x = RandomTensor({4096, 8}, rng, 2.0);
  Tensor<double> train_out;
  for (int i = 0; i < 200; ++i) {
    Tape<double> tape;
    train_out = bn(tape, tape.Constant(x), ForwardMode{.train = true}).value();
  }
  Tape<double> tape;
  const Tensor<double> eval_out = bn(tape, tape.Constant(x), ForwardMode{}).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(eval_out[i], train_out[i], 1e-3);
}

TEST(BatchNormTest, ZeroFeatureDimThrows) {
  ParameterStore<double> store;
  EXPECT_THROW(BatchNormLayer<double>(store, "bn", 0), std::invalid_argument);
}

TEST(DropoutTest, ZeroRateIsIdentity) {
  Rng rng(7);
  Tape<double> tape;
  const Tensor<double> x = RandomTensor({3, 3}, rng);
  EXPECT_EQ(Dropout(tape.Constant(x), 0.0, rng, true).value().storage(), x.storage());
  EXPECT_EQ(Dropout(tape.Constant(x), 0.5, rng, false).value().storage(), x.storage());
}

TEST(DropoutTest, PreservesExpectation) {
  Rng rng(8);
  Tape<double> tape;
  const Tensor<double> x({1, 100000}, 1.0);
  const Var<double> y = Dropout(tape.Constant(x), 0.2, rng, true);
  const double mean =
      std::accumulate(y.value().values().begin(), y.value().values().end(), 0.0) / 1e5;
  EXPECT_NEAR(mean, 1.0, 0.02);
}

TEST(DropoutTest, SameSeedSameMask) {
  Rng a(9), b(9);
  Tape<double> tape;
  const Tensor<double> x({4, 16}, 1.0);
  EXPECT_EQ(Dropout(tape.Constant(x), 0.3, a, true).value().storage(),
            Dropout(tape.Constant(x), 0.3, b, true).value().storage());
}

TEST(DropoutTest, RateOutOfRangeThrows) {
  Rng rng(10);
  Tape<double> tape;
  EXPECT_THROW(Dropout(tape.Constant(Tensor<double>({1, 1})), 1.0, rng, true),
               std::invalid_argument);
  EXPECT_THROW(Dropout(tape.Constant(Tensor<double>({1, 1})), -0.1, rng, true),
               std::invalid_argument);
}

TEST(AdamWTest, FirstStepFromZero) {
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  Moments<double> m;
  AdamWStep<double>(p, g, m, AdamWConfig{}, 0.1, 1);
  EXPECT_NEAR(p[0], -0.1, 1e-7);
}

TEST(AdamWTest, ZeroGradientNoDecayLeavesParam) {
  std::vector<double> p{1.5};
  const std::vector<double> g{0.0};
  Moments<double> m;
  AdamWStep<double>(p, g, m, AdamWConfig{}, 0.1, 1);
  EXPECT_DOUBLE_EQ(p[0], 1.5);
}

TEST(AdamWTest, DecoupledDecayShrinksByLrTimesWd) {
  std::vector<double> p{2.0};
  const std::vector<double> g{0.0};
  Moments<double> m;
  AdamWStep<double>(p, g, m, AdamWConfig{.weight_decay = 0.01}, 0.1, 1);
  EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.1 * 0.01 * 2.0);
}

TEST(AdamWTest, ShapeMismatchThrows) {
  std::vector<double> p{0.0, 1.0};
  const std::vector<double> g{1.0};
  Moments<double> m;
  EXPECT_THROW(AdamWStep<double>(p, g, m, AdamWConfig{}, 0.1, 1), std::invalid_argument);
}

// Textbook Adam on f(x) = (x - 3)^2, written independently of AdamWStep.
TEST(AdamWTest, WithoutDecayMatchesReferenceAdam) {
  const double lr = 0.05, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double ref = -1.0, m = 0.0, v = 0.0;
  std::vector<double> p{-1.0};
  Moments<double> state;
  for (std::size_t t = 1; t <= 300; ++t) {
    const double g_ref = 2.0 * (ref - 3.0);
    m = b1 * m + (1 - b1) * g_ref;
    v = b2 * v + (1 - b2) * g_ref * g_ref;
    ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);

    const std::vector<double> g{2.0 * (p[0] - 3.0)};
    AdamWStep<double>(p, g, state, AdamWConfig{}, lr, t);
    ASSERT_NEAR(p[0], ref, 1e-12) << "step " << t;
  }
}

TEST(ScheduleTest, WarmupEndpointsAndCosineMidpoint) {
  const LRSchedule s = WarmupCosine{.base_lr = 1e-4, .warmup_steps = 1000, .total_steps = 3000};
  EXPECT_EQ(LearningRateAt(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(LearningRateAt(s, 1000), 1e-4);
  EXPECT_NEAR(LearningRateAt(s, 2000), 0.5e-4, 1e-9);
  EXPECT_NEAR(LearningRateAt(s, 3000), 0.0, 1e-15);
  for (int step = 0; step < 5000; step += 7) EXPECT_GE(LearningRateAt(s, step), 0.0);
}

TEST(ScheduleTest, WarmRestartsReturnToBase) {
  const LRSchedule s = CosineWarmRestarts{.base_lr = 5e-5, .t0_epochs = 10, .t_mult = 2};
  EXPECT_DOUBLE_EQ(LearningRateAt(s, 0), 5e-5);
  EXPECT_DOUBLE_EQ(LearningRateAt(s, 10), 5e-5);
  EXPECT_NEAR(LearningRateAt(s, 5), 2.5e-5, 1e-15);
  EXPECT_NEAR(LearningRateAt(s, 20), 2.5e-5, 1e-15);  // middle of the 20-epoch cycle
  EXPECT_DOUBLE_EQ(LearningRateAt(s, 30), 5e-5);
  EXPECT_LT(LearningRateAt(s, 9.99), 1e-7);
  for (double e = 0; e < 200; e += 0.37) EXPECT_GE(LearningRateAt(s, e), 0.0);
}

// Every primitive is checked against central differences, in 64-bit, for ten
// seeds each.
class OpGradientTest : public ::testing::TestWithParam<int> {};

TEST_P(OpGradientTest, AllOpsMatchFiniteDifferences) {
  const std::uint64_t seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  ParameterStore<double> s;
  AddRandom(s, "a", {3, 4}, rng);
  AddRandom(s, "b", {4, 5}, rng);
  AddRandom(s, "bt", {5, 4}, rng);
  AddRandom(s, "c", {3, 4}, rng);
  AddRandom(s, "row", {4}, rng);
  AddRandom(s, "col", {3, 1}, rng);
  AddRandom(s, "scalar", {1, 1}, rng);
  AddRandom(s, "gain", {4}, rng);
  AddRandom(s, "bias", {4}, rng);
  AddRandom(s, "nodes", {6, 4}, rng);
  AddRandom(s, "scores", {6, 1}, rng);
  AddRandom(s, "q", {2 * 3, 4}, rng);
  AddRandom(s, "k", {2 * 5, 4}, rng);
  AddRandom(s, "v", {2 * 5, 4}, rng);
  Tensor<double> running_mean = RandomTensor({4}, rng);
  Tensor<double> running_var({4}, 1.7);
  const std::vector<std::size_t> gather_idx{2, 0, 2, 1, 5};
  const std::vector<std::size_t> seg{0, 0, 1, 2, 2, 2};
  const std::vector<std::size_t> offsets{0, 2, 3, 6};
  const std::vector<std::size_t> targets{1, 3, 0};
  Tensor<double> bin_targets({3, 4});
  Tensor<double> bin_mask({3, 4}, 1.0);
  for (std::size_t i = 0; i < 12; ++i) {
    bin_targets[i] = static_cast<double>(i % 2);
    if (i % 5 == 0) bin_mask[i] = 0.0;
  }
  std::vector<std::uint8_t> key_valid{1, 1, 1, 0, 0, 1, 0, 1, 1, 1};

  const auto f = [&](Tape<double>& t) {
    auto P = [&](const char* n) { return t.Param(s.At(n)); };
    std::vector<Var<double>> terms;
    terms.push_back(WeightedSum(MatMul(P("a"), P("b")), seed + 1));
    terms.push_back(WeightedSum(MatMul(P("a"), P("bt"), true), seed + 2));
    terms.push_back(WeightedSum(Mul(Add(P("a"), P("c")), Sub(P("a"), P("c"))), seed + 3));
    terms.push_back(WeightedSum(AddRow(P("a"), P("row")), seed + 4));
    terms.push_back(WeightedSum(MulCol(P("a"), P("col")), seed + 5));
    terms.push_back(WeightedSum(MulScalar(P("a"), P("scalar")), seed + 6));
    terms.push_back(WeightedSum(Relu(P("a")), seed + 7));
    terms.push_back(WeightedSum(ShiftedSoftplus(P("a")), seed + 8));
    terms.push_back(WeightedSum(SoftmaxRows(P("a")), seed + 9));
    terms.push_back(WeightedSum(LayerNorm(P("a"), P("gain"), P("bias")), seed + 10));
    terms.push_back(
        WeightedSum(BatchNormTrain<double>(P("nodes"), P("gain"), P("bias"), 1e-5, nullptr, nullptr),
                    seed + 11));
    terms.push_back(WeightedSum(
        BatchNormEval(P("nodes"), P("gain"), P("bias"), running_mean, running_var, 1e-5),
        seed + 12));
    terms.push_back(WeightedSum(GatherRows(P("nodes"), gather_idx), seed + 13));
    terms.push_back(WeightedSum(IndexAddRows(P("nodes"), seg, 4), seed + 14));
    terms.push_back(WeightedSum(SegmentMeanRows(P("nodes"), seg, 3), seed + 15));
    terms.push_back(WeightedSum(SegmentSoftmax(P("scores"), offsets), seed + 16));
    terms.push_back(WeightedSum(SegmentSumRows(P("nodes"), offsets), seed + 17));
    terms.push_back(WeightedSum(ConcatCols<double>({P("a"), P("col"), P("c")}), seed + 18));
    terms.push_back(WeightedSum(SliceCols(P("b"), 1, 3), seed + 19));
    terms.push_back(WeightedSum(L2NormalizeRows(P("a")), seed + 20));
    terms.push_back(SoftmaxCrossEntropy(P("a"), targets));
    terms.push_back(BinaryCrossEntropyWithLogits(P("c"), bin_targets, bin_mask));
    terms.push_back(MaskedMeanSquaredError(P("c"), bin_targets, bin_mask));
    terms.push_back(WeightedSum(
        MultiHeadAttention(P("q"), P("k"), P("v"), 2, 3, 5, 2, key_valid), seed + 21));
    Var<double> total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) total = Add(total, terms[i]);
    return total;
  };
  const GradCheckResult res = GradCheckParameters(s, f);
  EXPECT_LT(res.max_rel_error, kFdTolerance) << "worst coordinate " << res.worst;
  EXPECT_GT(res.coordinates, 150u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradientTest, ::testing::Range(0, 10));

TEST(GatherTest, OutOfRangeThrows) {
  Tape<double> tape;
  const std::vector<std::size_t> idx{3};
  EXPECT_THROW(GatherRows(tape.Constant(Tensor<double>({2, 2})), idx), std::out_of_range);
}

TEST(SegmentTest, EmptySegmentThrows) {
  Tape<double> tape;
  const std::vector<std::size_t> seg{0, 2};
  EXPECT_THROW(SegmentMeanRows(tape.Constant(Tensor<double>({2, 2})), seg, 3),
               std::invalid_argument);
}

TEST(AttentionTest, MaskedKeysDoNotInfluenceOutput) {
  Rng rng(11);
  Tape<double> tape;
  Tensor<double> q = RandomTensor({3, 8}, rng);
  Tensor<double> k = RandomTensor({4, 8}, rng);
  Tensor<double> v = RandomTensor({4, 8}, rng);
  const std::vector<std::uint8_t> valid{1, 1, 0, 0};
  const Tensor<double> out =
      MultiHeadAttention(tape.Constant(q), tape.Constant(k), tape.Constant(v), 1, 3, 4, 2, valid)
          .value();
  for (std::size_t c = 0; c < 8; ++c) {
    k(3, c) += 100.0;
    v(2, c) -= 50.0;
  }
  const Tensor<double> out2 =
      MultiHeadAttention(tape.Constant(q), tape.Constant(k), tape.Constant(v), 1, 3, 4, 2, valid)
          .value();
  EXPECT_EQ(out.storage(), out2.storage());
}

TEST(TapeTest, ParameterGradientsAccumulateAcrossUses) {
  ParameterStore<double> store;
  Parameter<double>& w = store.Add("w", {1, 1});
  w.value[0] = 2.0;
  Tape<double> tape;
  Var<double> a = tape.Param(w);
  Var<double> b = tape.Param(w);
  EXPECT_EQ(a.id(), b.id());
  tape.Backward(Sum(Mul(a, b)));
  EXPECT_DOUBLE_EQ(w.grad[0], 4.0);
}

}  // namespace
}  // namespace molfm::nn

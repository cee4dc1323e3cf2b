// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "molfm/nn/rng.hpp"
#include "molfm/nn/tape.hpp"

// Differentiable matrix ops. All inputs are viewed as rows x cols; shape
// errors throw std::invalid_argument.
namespace molfm::nn {

// a (m x k) * b (k x n), or a * b^T when transpose_b (b is n x k).
template <typename T>
Var<T> MatMul(Var<T> a, Var<T> b, bool transpose_b = false);

template <typename T>
Var<T> Add(Var<T> a, Var<T> b);
template <typename T>
Var<T> Sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> Mul(Var<T> a, Var<T> b);

// a (m x n) + row (1 x n) broadcast over rows.
template <typename T>
Var<T> AddRow(Var<T> a, Var<T> row);
// a (m x n) scaled row-wise by col (m x 1).
template <typename T>
Var<T> MulCol(Var<T> a, Var<T> col);
// s (1 x 1) * a.
template <typename T>
Var<T> MulScalar(Var<T> a, Var<T> s);
template <typename T>
Var<T> Scale(Var<T> a, double factor);
// Elementwise product with a constant tensor (dropout masks, label masks).
template <typename T>
Var<T> MulConst(Var<T> a, const Tensor<T>& c);

template <typename T>
Var<T> Relu(Var<T> a);
// ln(0.5 e^x + 0.5), smooth and zero at the origin.
template <typename T>
Var<T> ShiftedSoftplus(Var<T> a);

template <typename T>
Var<T> Sum(Var<T> a);
template <typename T>
Var<T> Mean(Var<T> a);

// Max-subtracted softmax along each row.
template <typename T>
Var<T> SoftmaxRows(Var<T> a);

template <typename T>
Var<T> LayerNorm(Var<T> x, Var<T> gain, Var<T> bias, double eps = 1e-5);

// Normalizes with the batch statistics of x; writes the (biased) batch mean
// and variance to the optional outputs for the running-average update.
template <typename T>
Var<T> BatchNormTrain(Var<T> x, Var<T> gain, Var<T> bias, double eps,
                      std::vector<T>* batch_mean, std::vector<T>* batch_var);
template <typename T>
Var<T> BatchNormEval(Var<T> x, Var<T> gain, Var<T> bias,
                     const Tensor<T>& running_mean,
                     const Tensor<T>& running_var, double eps);

// Inverted dropout; identity when !active or p == 0. Throws unless 0 <= p < 1.
template <typename T>
Var<T> Dropout(Var<T> x, double p, Rng& rng, bool active);

// out[i] = x[index[i]].
template <typename T>
Var<T> GatherRows(Var<T> x, std::span<const std::size_t> index);
// out (rows x cols) with out[index[i]] += src[i].
template <typename T>
Var<T> IndexAddRows(Var<T> src, std::span<const std::size_t> index,
                    std::size_t rows);
// Mean of the rows belonging to each segment; every segment must be non-empty.
template <typename T>
Var<T> SegmentMeanRows(Var<T> x, std::span<const std::size_t> segment,
                       std::size_t num_segments);
// Softmax of a column vector within contiguous groups [offsets[g], offsets[g+1]).
template <typename T>
Var<T> SegmentSoftmax(Var<T> col, std::span<const std::size_t> offsets);
// Sum of rows inside contiguous groups [offsets[g], offsets[g+1]).
template <typename T>
Var<T> SegmentSumRows(Var<T> x, std::span<const std::size_t> offsets);

template <typename T>
Var<T> ConcatCols(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> SliceCols(Var<T> x, std::size_t begin, std::size_t count);

// Rows scaled to unit L2 norm. Throws on an all-zero row.
template <typename T>
Var<T> L2NormalizeRows(Var<T> x);

// Mean over rows of -log softmax(logits)[target].
template <typename T>
Var<T> SoftmaxCrossEntropy(Var<T> logits, std::span<const std::size_t> targets);
// Mean sigmoid cross-entropy over entries with mask != 0.
template <typename T>
Var<T> BinaryCrossEntropyWithLogits(Var<T> logits, const Tensor<T>& targets,
                                    const Tensor<T>& mask);
// Mean squared error over entries with mask != 0.
template <typename T>
Var<T> MaskedMeanSquaredError(Var<T> pred, const Tensor<T>& targets,
                              const Tensor<T>& mask);

// Scaled dot-product attention over `batch` independent items, each with
// q_len queries and kv_len keys; rows of q are item-major (item * q_len + t).
// key_valid[item * kv_len + t] == 0 excludes that key. Heads split the
// feature dimension evenly.
template <typename T>
Var<T> MultiHeadAttention(Var<T> q, Var<T> k, Var<T> v, std::size_t batch,
                          std::size_t q_len, std::size_t kv_len,
                          std::size_t heads,
                          std::span<const std::uint8_t> key_valid);

}  // namespace molfm::nn

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "molfm/fusion/model.hpp"
#include "molfm/objectives/objectives.hpp"
#include "molfm/pipeline/checkpoint.hpp"
#include "molfm/pipeline/config.hpp"
#include "molfm/pipeline/dataset.hpp"
#include "molfm/pipeline/split.hpp"

namespace molfm::pipeline {

// Non-finite loss during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parameters of one run, always in float.
struct ModelInstance {
  std::unique_ptr<nn::ParameterStore<float>> store;
  std::unique_ptr<fusion::MolFM<float>> model;
  std::unique_ptr<objectives::PretrainHeads<float>> heads;  // pretrain checkpoints only
  fusion::Variant variant = fusion::Variant::kFull;
};

// Rebuilds the model (and pretrain heads for pretrain checkpoints) and loads
// every tensor.
ModelInstance ModelFromCheckpoint(const Checkpoint& ckpt);
molrecord::Vocabulary VocabFromCheckpoint(const Checkpoint& ckpt);
fusion::ModelConfig ModelConfigFromCheckpoint(const Checkpoint& ckpt);

// Fills vocab size, task count and context width from the dataset.
fusion::ModelConfig ConfigForDataset(fusion::ModelConfig cfg, const PreparedDataset& data);

struct PretrainEpoch {
  std::size_t epoch = 0;  // 1-based
  double contrastive = 0.0;
  double masked_atom = 0.0;
  double total = 0.0;
  double lr = 0.0;  // at the last step of the epoch
};

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<PretrainEpoch> log;
};

using PretrainLogFn = std::function<void(const PretrainEpoch&)>;

// Contrastive + masked-atom pre-training of the full model on every record,
// AdamW with warmup-cosine. Epoch losses are molecule-weighted batch means.
// Throws NumericError on a non-finite loss.
PretrainResult RunPretrain(const PreparedDataset& data, const fusion::ModelConfig& model_cfg,
                           const PretrainConfig& cfg, std::uint64_t seed,
                           const PretrainLogFn& on_epoch = {});

struct FinetuneEpoch {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_metric = 0.0;
  std::optional<double> train_metric;
  double lr = 0.0;
  bool improved = false;
};

struct FinetuneResult {
  Checkpoint checkpoint;  // best-val weights
  std::vector<FinetuneEpoch> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  std::optional<double> test_metric;
  std::string metric;  // "roc_auc", "val_loss" or "rmse"
  bool higher_is_better = true;
  bool early_stopped = false;
  std::vector<std::string> warnings;
};

// Return true to stop after this epoch.
using FinetuneEpochFn = std::function<bool(const FinetuneEpoch&)>;

// Supervised training on split.train with validation every epoch. Keeps the
// weights of the best validation epoch (strict improvement) and stops once
// `patience` epochs pass without one. `init` provides pre-trained encoder
// weights (enc1d., enc2d., enc3d., ens.query); it is ignored for no_pretrain.
// The selection metric is mean ROC-AUC (binary) or RMSE (regression); when no
// validation task has both classes, the validation loss is used instead.
FinetuneResult RunFinetune(const PreparedDataset& data, const Split& split,
                           const fusion::ModelConfig& model_cfg, const FinetuneConfig& cfg,
                           fusion::Variant variant, std::uint64_t seed,
                           const Checkpoint* init = nullptr,
                           const FinetuneEpochFn& on_epoch = {});

// Eval-mode predictions (probabilities or values) for data[indices].
nn::Tensor<double> PredictIndices(const fusion::MolFM<float>& model, const PreparedDataset& data,
                                  const std::vector<std::size_t>& indices,
                                  std::size_t batch_size = 64);

// Mean ROC-AUC or RMSE of predictions on data[indices]; absent when no task
// is computable.
std::optional<double> EvaluateMetric(const fusion::MolFM<float>& model, const PreparedDataset& data,
                                     const std::vector<std::size_t>& indices);

}  // namespace molfm::pipeline

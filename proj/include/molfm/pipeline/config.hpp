// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "molfm/fusion/model.hpp"
#include "molfm/objectives/objectives.hpp"

namespace molfm::pipeline {

struct PretrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  std::size_t warmup_steps = 1000;
  std::size_t proj_dim = 128;
  objectives::ContrastiveConfig contrastive;
  objectives::MaskingConfig masking;
  objectives::PretrainWeights weights;
};

struct FinetuneConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double lr = 5e-5;
  double weight_decay = 1e-4;
  std::size_t patience = 15;
  double restart_t0 = 10.0;  // epochs
  double restart_t_mult = 2.0;
  std::size_t mc_passes = 20;
  // Also evaluates the train part after every epoch.
  bool track_train_metric = false;
};

// Throw std::invalid_argument naming the first non-positive field.
void CheckPretrainConfig(const PretrainConfig& c);
void CheckFinetuneConfig(const FinetuneConfig& c);

std::string_view TaskKindName(fusion::TaskKind k);
fusion::TaskKind ParseTaskKind(std::string_view name);

// Flat, fully explicit description of a model; stored in checkpoints.
nlohmann::ordered_json ModelConfigToJson(const fusion::ModelConfig& cfg);
// Every key is required; unknown keys are rejected.
fusion::ModelConfig ModelConfigFromJson(const nlohmann::json& j);

}  // namespace molfm::pipeline

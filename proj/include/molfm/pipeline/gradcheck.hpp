// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "molfm/fusion/model.hpp"
#include "molfm/nn/grad_check.hpp"

namespace molfm::pipeline {

// d=16 everywhere, two layers per encoder, two heads.
fusion::ModelConfig TinyModelConfig(std::size_t vocab_size, std::size_t num_tasks = 2,
                                    std::size_t context_dim = 2);

struct GradCheckEntry {
  std::string name;
  double eps = 0.0;
  nn::GradCheckResult result;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst;  // "<entry>: <coordinate>"
  std::size_t coordinates = 0;
};

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t max_per_tensor = 32;  // evenly strided coordinates per tensor
  double layer_eps = 1e-5;
  double model_eps = 1e-4;  // encoders and composed models
  std::size_t conformers = 3;
};

// Central-difference checks in double precision of every layer, each loss,
// the three encoders, the fine-tuning model and the pre-training model.
GradCheckReport RunGradCheckSuite(const GradCheckOptions& opts = {});

}  // namespace molfm::pipeline

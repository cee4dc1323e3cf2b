// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "molfm/fusion/model.hpp"
#include "molfm/pipeline/dataset.hpp"
#include "molfm/pipeline/metrics.hpp"

namespace molfm::pipeline {

// Eval-mode ensemble weights and Boltzmann priors per molecule of data[indices].
struct ConformerWeights {
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> prior;
};
ConformerWeights CollectConformerWeights(const fusion::MolFM<float>& model, const PreparedDataset& data,
                                         const std::vector<std::size_t>& indices);

struct AnalysisOptions {
  std::size_t mc_passes = 20;
  double sigma_threshold = 0.15;
  std::uint64_t seed = 0;
};

// Attention/Boltzmann correlation, MC-dropout calibration on the first task
// (binary models) and fingerprint distance to the majority centroid of
// `reference` records. Parts that are undefined for the data are reported
// as {"error": ...}.
nlohmann::ordered_json Analyze(const fusion::MolFM<float>& model, const PreparedDataset& data,
                               const std::vector<std::size_t>& indices,
                               const std::vector<std::size_t>& reference, const AnalysisOptions& opts);

}  // namespace molfm::pipeline

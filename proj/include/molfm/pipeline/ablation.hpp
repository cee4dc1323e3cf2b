// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "molfm/pipeline/train.hpp"

namespace molfm::pipeline {

struct SeedRun {
  std::uint64_t seed = 0;
  std::optional<double> val_metric;
  std::optional<double> test_metric;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::string error;  // non-empty when the run failed
};

struct VariantSummary {
  fusion::Variant variant = fusion::Variant::kFull;
  std::vector<SeedRun> runs;
  std::optional<double> mean;  // over seeds with a test metric
  std::optional<double> std;   // population std
  std::optional<double> delta;  // mean - full mean
  std::string error;
};

struct AblationResult {
  std::string metric;  // "roc_auc" or "rmse"
  std::vector<VariantSummary> variants;
};

// (variant, seed) runs in parallel over up to `jobs` threads. A failing run is
// recorded and the others continue. Results are ordered as requested, so the
// output does not depend on `jobs`.
AblationResult RunAblation(const PreparedDataset& data, const Split& split,
                           const fusion::ModelConfig& model_cfg, const FinetuneConfig& cfg,
                           const std::vector<fusion::Variant>& variants,
                           const std::vector<std::uint64_t>& seeds, const Checkpoint* init,
                           std::size_t jobs = 1);

double Mean(const std::vector<double>& v);
double PopulationStd(const std::vector<double>& v);

// Long format: variant,seed,split,metric,value.
std::string MetricsCsv(const AblationResult& r);
// One row per variant: variant,mean,std,delta.
std::string AblationCsv(const AblationResult& r);
nlohmann::ordered_json SummaryJson(const AblationResult& r);

// Writes metrics.csv, ablation.csv and summary.json into `dir`.
void WriteAblationOutputs(const std::filesystem::path& dir, const AblationResult& r);

// Shortest round-trip decimal form of v.
std::string FormatDouble(double v);

}  // namespace molfm::pipeline

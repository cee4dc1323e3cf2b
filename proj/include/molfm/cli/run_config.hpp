// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "molfm/fusion/model.hpp"
#include "molfm/pipeline/config.hpp"

namespace molfm::cli {

// All schema violations of one config, in the order found.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct DataSection {
  std::string path;                  // JSONL dataset, relative to the working directory
  std::string split = "split.json";  // relative to output_dir
  std::size_t conformers = 5;        // expected K; other counts are reported
};

struct AnalysisSection {
  std::string checkpoint = "finetune.ckpt";  // relative to output_dir
  double sigma_threshold = 0.15;
};

struct RunConfig {
  DataSection data;
  fusion::ModelConfig model;  // vocab size, tasks and context come from the data
  pipeline::PretrainConfig pretrain;
  pipeline::FinetuneConfig finetune;
  fusion::Variant finetune_variant = fusion::Variant::kFull;
  std::string finetune_init;  // pre-training checkpoint, relative to output_dir
  std::vector<fusion::Variant> ablation_variants = fusion::AllVariants();
  AnalysisSection analysis;
  std::string output_dir = ".";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
};

// Dotted keys of every setting, in schema order ("train.finetune.lr", ...).
std::vector<std::string> ConfigKeys();

// Nested JSON, one object per section: {"train": {"finetune": {"lr": 1e-4}}}.
nlohmann::ordered_json RunConfigToJson(const RunConfig& cfg);

// Builds a config from defaults, then `file` (may be null), then each
// "key=value" override. A value that is not valid JSON is taken as a string;
// list keys also accept comma-separated strings. `env_seed` (MOLFM_SEED) sets
// `seed` when neither the file nor an override does. Throws ConfigError
// listing every problem.
RunConfig LoadRunConfig(const nlohmann::json* file, const std::vector<std::string>& overrides,
                        const std::optional<std::string>& env_seed = std::nullopt);

// One line per key with its default value.
std::string ConfigKeyTable();

}  // namespace molfm::cli

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/config.hpp"

#include <set>
#include <stdexcept>

namespace molfm::pipeline {

namespace {

void Positive(bool ok, const char* field) {
  if (!ok) throw std::invalid_argument(std::string(field) + " must be positive");
}

}  // namespace

void CheckPretrainConfig(const PretrainConfig& c) {
  Positive(c.epochs > 0, "pretrain.epochs");
  Positive(c.batch_size > 1, "pretrain.batch_size (>= 2)");
  Positive(c.lr > 0, "pretrain.lr");
  Positive(c.weight_decay >= 0, "pretrain.weight_decay");
  Positive(c.proj_dim > 0, "pretrain.proj_dim");
  Positive(c.contrastive.temperature > 0, "pretrain.temperature");
  Positive(c.masking.mask_fraction > 0 && c.masking.mask_fraction <= 1, "pretrain.mask_fraction");
  Positive(c.weights.lambda_map >= 0, "pretrain.lambda_map");
}

void CheckFinetuneConfig(const FinetuneConfig& c) {
  Positive(c.epochs > 0, "finetune.epochs");
  Positive(c.batch_size > 0, "finetune.batch_size");
  Positive(c.lr >= 0, "finetune.lr");
  Positive(c.weight_decay >= 0, "finetune.weight_decay");
  Positive(c.patience >= 1, "finetune.patience");
  Positive(c.restart_t0 > 0, "finetune.restart_t0");
  Positive(c.restart_t_mult >= 1, "finetune.restart_t_mult");
  Positive(c.mc_passes >= 1, "finetune.mc_passes");
}

std::string_view TaskKindName(fusion::TaskKind k) {
  return k == fusion::TaskKind::kBinary ? "binary" : "regression";
}

fusion::TaskKind ParseTaskKind(std::string_view name) {
  if (name == "binary" || name == "classification") return fusion::TaskKind::kBinary;
  if (name == "regression") return fusion::TaskKind::kRegression;
  throw std::invalid_argument("unknown task kind \"" + std::string(name) + "\"");
}

nlohmann::ordered_json ModelConfigToJson(const fusion::ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.enc1d.vocab_size;
  j["d1"] = c.enc1d.d_model;
  j["transformer_layers"] = c.enc1d.layers;
  j["transformer_heads"] = c.enc1d.heads;
  j["transformer_ff"] = c.enc1d.d_ff;
  j["max_len"] = c.enc1d.max_len;
  j["d2"] = c.enc2d.d_model;
  j["gin_layers"] = c.enc2d.layers;
  j["d3"] = c.enc3d.d_model;
  j["schnet_interactions"] = c.enc3d.interactions;
  j["cutoff"] = c.enc3d.cutoff;
  j["n_rbf"] = c.enc3d.n_rbf;
  j["encoder_dropout"] = c.enc1d.dropout;
  j["fusion_dim"] = c.fusion_dim;
  j["fusion_heads"] = c.fusion_heads;
  j["context_dim"] = c.context_dim;
  j["head_hidden"] = c.head_hidden;
  j["head_dropout"] = c.head_dropout;
  j["num_tasks"] = c.num_tasks;
  j["task"] = TaskKindName(c.task);
  j["temperature"] = c.temperature;
  j["conformer_seed"] = c.conformer_seed;
  return j;
}

fusion::ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "vocab_size", "d1", "transformer_layers", "transformer_heads", "transformer_ff",
      "max_len", "d2", "gin_layers", "d3", "schnet_interactions", "cutoff", "n_rbf",
      "encoder_dropout", "fusion_dim", "fusion_heads", "context_dim", "head_hidden",
      "head_dropout", "num_tasks", "task", "temperature", "conformer_seed"};
  if (!j.is_object()) throw std::invalid_argument("model config: expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!kKeys.count(k)) throw std::invalid_argument("model config: unknown key \"" + k + "\"");
  }
  for (const auto& k : kKeys) {
    if (!j.contains(k)) throw std::invalid_argument("model config: missing key \"" + k + "\"");
  }
  fusion::ModelConfig c;
  c.enc1d.vocab_size = j["vocab_size"].get<std::size_t>();
  c.enc1d.d_model = j["d1"].get<std::size_t>();
  c.enc1d.layers = j["transformer_layers"].get<std::size_t>();
  c.enc1d.heads = j["transformer_heads"].get<std::size_t>();
  c.enc1d.d_ff = j["transformer_ff"].get<std::size_t>();
  c.enc1d.max_len = j["max_len"].get<std::size_t>();
  c.enc2d.d_model = j["d2"].get<std::size_t>();
  c.enc2d.layers = j["gin_layers"].get<std::size_t>();
  c.enc3d.d_model = j["d3"].get<std::size_t>();
  c.enc3d.interactions = j["schnet_interactions"].get<std::size_t>();
  c.enc3d.cutoff = j["cutoff"].get<double>();
  c.enc3d.n_rbf = j["n_rbf"].get<std::size_t>();
  const double dropout = j["encoder_dropout"].get<double>();
  c.enc1d.dropout = c.enc2d.dropout = c.enc3d.dropout = dropout;
  c.fusion_dim = j["fusion_dim"].get<std::size_t>();
  c.fusion_heads = j["fusion_heads"].get<std::size_t>();
  c.context_dim = j["context_dim"].get<std::size_t>();
  c.head_hidden = j["head_hidden"].get<std::size_t>();
  c.head_dropout = j["head_dropout"].get<double>();
  c.num_tasks = j["num_tasks"].get<std::size_t>();
  c.task = ParseTaskKind(j["task"].get<std::string>());
  c.temperature = j["temperature"].get<double>();
  c.conformer_seed = j["conformer_seed"].get<std::uint64_t>();
  return c;
}

}  // namespace molfm::pipeline

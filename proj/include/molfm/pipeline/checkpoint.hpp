// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "molfm/nn/parameter.hpp"
#include "molfm/nn/rng.hpp"

// Binary layout, little-endian:
//   "MFLT" | u32 version | u64 n + n bytes of JSON metadata | u32 tensor count
//   per tensor: u32 n + name | u32 rank | rank x u64 dims | f32 payload
namespace molfm::pipeline {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  nn::Tensor<float> value;
};

struct Checkpoint {
  // {"phase", "variant", "model": ModelConfigToJson, "vocab": [tokens],
  //  "epoch", "best_val" (number or null), "rng": mt19937_64 text state}
  nlohmann::ordered_json meta;
  std::vector<NamedTensor> tensors;

  const NamedTensor* Find(std::string_view name) const;
};

// Writes to "<path>.tmp" and renames over `path`.
void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws CheckpointError naming the byte offset of the first problem.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

std::string SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

template <typename T>
std::vector<NamedTensor> CaptureTensors(const nn::ParameterStore<T>& store);

struct LoadFilter {
  // Only store entries whose name starts with one of these are loaded; empty
  // means every entry. Checkpoint tensors outside the filter are ignored.
  std::vector<std::string> prefixes;
};

// Copies matching tensors into `store`. Throws CheckpointError listing store
// names missing from the checkpoint, checkpoint names unknown to the store
// (when no filter is set) and shape mismatches.
template <typename T>
void ApplyTensors(const Checkpoint& ckpt, nn::ParameterStore<T>& store, const LoadFilter& filter = {});

std::string RngState(const nn::Rng& rng);
nn::Rng RngFromState(const std::string& state);

}  // namespace molfm::pipeline

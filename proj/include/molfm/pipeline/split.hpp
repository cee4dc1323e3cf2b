// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "molfm/molrecord/record.hpp"

namespace molfm::pipeline {

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Record indices per part, in dataset order.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  std::vector<std::string> warnings;
};

// Groups by scaffold_key, orders groups by (size desc, key asc) and fills
// train until it holds >= ratios.train of the molecules, then val to
// >= ratios.val; the rest is test. `seed` is accepted but unused by the
// greedy rule. Throws on an empty dataset.
Split ScaffoldSplit(const std::vector<molrecord::MoleculeRecord>& records,
                    const SplitRatios& ratios = {}, std::uint64_t seed = 0);

struct OverlapStats {
  std::size_t unique_test_scaffolds = 0;
  std::size_t overlapping_train = 0;
};

OverlapStats ScaffoldOverlapStats(const std::vector<molrecord::MoleculeRecord>& records,
                                  const Split& split);

// {"train": [ids], "val": [ids], "test": [ids]}.
nlohmann::ordered_json SplitToJson(const std::vector<molrecord::MoleculeRecord>& records,
                                   const Split& split);

// Rejects unknown or repeated ids and ids missing from every part.
Split SplitFromJson(const nlohmann::json& j,
                    const std::vector<molrecord::MoleculeRecord>& records);

void WriteSplitFile(const std::filesystem::path& path,
                    const std::vector<molrecord::MoleculeRecord>& records, const Split& split);
// Throws std::runtime_error("split.json not found: ...") when absent.
Split ReadSplitFile(const std::filesystem::path& path,
                    const std::vector<molrecord::MoleculeRecord>& records);

}  // namespace molfm::pipeline

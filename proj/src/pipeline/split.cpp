// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace molfm::pipeline {

Split ScaffoldSplit(const std::vector<molrecord::MoleculeRecord>& records,
                    const SplitRatios& ratios, std::uint64_t /*seed*/) {
  if (records.empty()) throw std::invalid_argument("scaffold_split: empty dataset");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) groups[records[i].scaffold_key].push_back(i);

  std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> order;
  for (const auto& g : groups) order.push_back(&g);
  // std::map iteration is key-ascending, so a stable sort on size gives
  // (size desc, key asc).
  std::stable_sort(order.begin(), order.end(),
                   [](auto* a, auto* b) { return a->second.size() > b->second.size(); });

  // Targets are whole molecule counts.
  const double n = static_cast<double>(records.size());
  const auto train_target = static_cast<std::size_t>(std::llround(ratios.train * n));
  const auto val_target = static_cast<std::size_t>(std::llround(ratios.val * n));
  Split s;
  for (const auto* g : order) {
    std::vector<std::size_t>* part = &s.test;
    if (s.train.size() < train_target) {
      part = &s.train;
    } else if (s.val.size() < val_target) {
      part = &s.val;
    }
    part->insert(part->end(), g->second.begin(), g->second.end());
  }
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  if (s.val.empty()) s.warnings.push_back("scaffold_split: validation part is empty");
  if (s.test.empty()) s.warnings.push_back("scaffold_split: test part is empty");
  return s;
}

OverlapStats ScaffoldOverlapStats(const std::vector<molrecord::MoleculeRecord>& records,
                                  const Split& split) {
  std::set<std::string> train, test;
  for (std::size_t i : split.train) train.insert(records.at(i).scaffold_key);
  for (std::size_t i : split.test) test.insert(records.at(i).scaffold_key);
  OverlapStats o;
  o.unique_test_scaffolds = test.size();
  for (const auto& key : test) o.overlapping_train += train.count(key);
  return o;
}

nlohmann::ordered_json SplitToJson(const std::vector<molrecord::MoleculeRecord>& records,
                                   const Split& split) {
  nlohmann::ordered_json j;
  const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, idx] : parts) {
    j[name] = nlohmann::ordered_json::array();
    for (std::size_t i : *idx) j[name].push_back(records.at(i).id);
  }
  return j;
}

Split SplitFromJson(const nlohmann::json& j,
                    const std::vector<molrecord::MoleculeRecord>& records) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) index.emplace(records[i].id, i);
  if (!j.is_object()) throw std::invalid_argument("split: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "train" && key != "val" && key != "test") {
      throw std::invalid_argument("split: unknown part \"" + key + "\"");
    }
  }
  Split s;
  std::vector<bool> seen(records.size(), false);
  const std::pair<const char*, std::vector<std::size_t>*> parts[] = {
      {"train", &s.train}, {"val", &s.val}, {"test", &s.test}};
  for (const auto& [name, out] : parts) {
    if (!j.contains(name)) continue;
    if (!j[name].is_array()) throw std::invalid_argument(std::string("split: ") + name + " is not a list");
    for (const auto& id : j[name]) {
      if (!id.is_string()) throw std::invalid_argument(std::string("split: ") + name + " holds a non-string id");
      const auto it = index.find(id.get<std::string>());
      if (it == index.end()) {
        throw std::invalid_argument("split: unknown record id \"" + id.get<std::string>() + "\"");
      }
      if (seen[it->second]) {
        throw std::invalid_argument("split: record id \"" + id.get<std::string>() +
                                    "\" assigned twice");
      }
      seen[it->second] = true;
      out->push_back(it->second);
    }
    std::sort(out->begin(), out->end());
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!seen[i]) throw std::invalid_argument("split: record id \"" + records[i].id + "\" not assigned");
  }
  return s;
}

void WriteSplitFile(const std::filesystem::path& path,
                    const std::vector<molrecord::MoleculeRecord>& records, const Split& split) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << SplitToJson(records, split).dump(2) << '\n';
}

Split ReadSplitFile(const std::filesystem::path& path,
                    const std::vector<molrecord::MoleculeRecord>& records) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("split.json not found: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("split: " + path.string() + ": " + e.what());
  }
  return SplitFromJson(j, records);
}

}  // namespace molfm::pipeline

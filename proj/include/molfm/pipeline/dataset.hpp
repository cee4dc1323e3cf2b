// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "molfm/encoders/inputs.hpp"
#include "molfm/fusion/model.hpp"
#include "molfm/molrecord/record.hpp"
#include "molfm/molrecord/vocab.hpp"
#include "molfm/objectives/objectives.hpp"

namespace molfm::pipeline {

// Records with their featurized inputs under one vocabulary. Not copyable:
// batches hold pointers into `inputs`.
class PreparedDataset {
 public:
  PreparedDataset(std::vector<molrecord::MoleculeRecord> records, molrecord::Vocabulary vocab,
                  std::size_t max_len = molrecord::kMaxTokens);
  PreparedDataset(const PreparedDataset&) = delete;
  PreparedDataset& operator=(const PreparedDataset&) = delete;

  const std::vector<molrecord::MoleculeRecord>& records() const { return records_; }
  const std::vector<encoders::MoleculeInputs>& inputs() const { return inputs_; }
  const molrecord::Vocabulary& vocab() const { return vocab_; }
  std::size_t size() const { return records_.size(); }
  std::size_t num_tasks() const { return num_tasks_; }
  std::size_t context_dim() const { return context_dim_; }

  fusion::ModelBatch Batch(const std::vector<std::size_t>& indices) const;
  objectives::SupervisedTargets Targets(const std::vector<std::size_t>& indices) const;

  // Fraction of SELFIES tokens mapped to UNK.
  double UnkRate() const;

 private:
  std::vector<molrecord::MoleculeRecord> records_;
  molrecord::Vocabulary vocab_;
  std::vector<encoders::MoleculeInputs> inputs_;
  std::size_t num_tasks_ = 0;
  std::size_t context_dim_ = 0;
};

// Vocabulary over the SELFIES of records[indices] (all records when empty).
molrecord::Vocabulary VocabFor(const std::vector<molrecord::MoleculeRecord>& records,
                               const std::vector<std::size_t>& indices = {});

// Splits `order` into consecutive batches of `batch_size`; a trailing batch
// smaller than `min_last` is merged into the previous one.
std::vector<std::vector<std::size_t>> MakeBatches(const std::vector<std::size_t>& order,
                                                  std::size_t batch_size, std::size_t min_last = 1);

}  // namespace molfm::pipeline

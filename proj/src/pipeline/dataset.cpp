// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/pipeline/dataset.hpp"

#include <stdexcept>

namespace molfm::pipeline {

PreparedDataset::PreparedDataset(std::vector<molrecord::MoleculeRecord> records,
                                 molrecord::Vocabulary vocab, std::size_t max_len)
    : records_(std::move(records)), vocab_(std::move(vocab)) {
  if (!records_.empty()) {
    num_tasks_ = records_.front().labels.size();
    context_dim_ = records_.front().context.size();
  }
  inputs_.reserve(records_.size());
  for (const auto& r : records_) {
    if (r.labels.size() != num_tasks_ || r.context.size() != context_dim_) {
      throw std::invalid_argument("dataset: record " + r.id + " differs in label or context length");
    }
    inputs_.push_back(encoders::Featurize(r, vocab_, max_len));
  }
}

fusion::ModelBatch PreparedDataset::Batch(const std::vector<std::size_t>& indices) const {
  fusion::ModelBatch b;
  b.context = nn::Tensor<double>::Matrix(indices.size(), context_dim_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    b.mols.push_back(&inputs_.at(indices[i]));
    for (std::size_t c = 0; c < context_dim_; ++c) b.context(i, c) = records_[indices[i]].context[c];
  }
  return b;
}

objectives::SupervisedTargets PreparedDataset::Targets(const std::vector<std::size_t>& indices) const {
  std::vector<const molrecord::MoleculeRecord*> rs;
  for (std::size_t i : indices) rs.push_back(&records_.at(i));
  return objectives::BuildTargets(rs, num_tasks_);
}

double PreparedDataset::UnkRate() const {
  std::size_t unk = 0, total = 0;
  for (const auto& in : inputs_) {
    for (std::size_t t = 0; t < in.tokens.ids.size(); ++t) {
      if (!in.tokens.mask[t]) continue;
      ++total;
      unk += in.tokens.ids[t] == molrecord::Vocabulary::kUnk;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unk) / static_cast<double>(total);
}

molrecord::Vocabulary VocabFor(const std::vector<molrecord::MoleculeRecord>& records,
                               const std::vector<std::size_t>& indices) {
  std::vector<std::string> corpus;
  if (indices.empty()) {
    for (const auto& r : records) corpus.push_back(r.selfies);
  } else {
    for (std::size_t i : indices) corpus.push_back(records.at(i).selfies);
  }
  return molrecord::BuildVocab(corpus);
}

std::vector<std::vector<std::size_t>> MakeBatches(const std::vector<std::size_t>& order,
                                                  std::size_t batch_size, std::size_t min_last) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (out.size() >= 2 && out.back().size() < min_last) {
    auto last = std::move(out.back());
    out.pop_back();
    out.back().insert(out.back().end(), last.begin(), last.end());
  }
  return out;
}

}  // namespace molfm::pipeline

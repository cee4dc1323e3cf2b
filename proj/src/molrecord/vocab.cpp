// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molfm/molrecord/vocab.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace molfm::molrecord {

namespace {
const char* const kReserved[] = {"<PAD>", "<UNK>", "<MASK>"};
}  // namespace

Vocabulary::Vocabulary() {
  for (const char* tok : kReserved) {
    ids_.emplace(tok, tokens_.size());
    tokens_.emplace_back(tok);
  }
}

Vocabulary Vocabulary::FromTokens(std::vector<std::string> tokens) {
  if (tokens.size() < kNumReserved || tokens[kPad] != kReserved[0] ||
      tokens[kUnk] != kReserved[1] || tokens[kMask] != kReserved[2]) {
    throw std::invalid_argument("vocabulary must start with <PAD>, <UNK>, <MASK>");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.ids_.emplace(v.tokens_[i], i).second) {
      throw std::invalid_argument("duplicate vocabulary token " + v.tokens_[i]);
    }
  }
  return v;
}

std::size_t Vocabulary::Id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::Contains(std::string_view token) const {
  return ids_.count(std::string(token)) > 0;
}

std::size_t TokenSequence::num_valid() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

std::vector<std::string> SplitSelfies(std::string_view s) {
  std::vector<std::string> out;
  std::size_t depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (c == '[') {
      if (depth++ == 0) start = i;
    } else if (c == ']') {
      if (depth == 0) {
        throw std::invalid_argument("unbalanced ']' at offset " + std::to_string(i));
      }
      if (--depth == 0) out.emplace_back(s.substr(start, i - start + 1));
    } else if (depth == 0) {
      throw std::invalid_argument("character '" + std::string(1, c) + "' at offset " +
                                  std::to_string(i) + " is outside any bracket group");
    }
  }
  if (depth != 0) {
    throw std::invalid_argument("unbalanced '[' at offset " + std::to_string(start));
  }
  return out;
}

Vocabulary BuildVocab(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  std::set<std::string> unique;
  for (const std::string& s : corpus) {
    try {
      for (std::string& tok : SplitSelfies(s)) unique.insert(std::move(tok));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("cannot tokenize \"" + s + "\": " + e.what());
    }
  }
  std::vector<std::string> tokens = {kReserved[0], kReserved[1], kReserved[2]};
  tokens.insert(tokens.end(), unique.begin(), unique.end());
  return Vocabulary::FromTokens(std::move(tokens));
}

TokenSequence TokenizeSelfies(std::string_view s, const Vocabulary& vocab,
                              std::size_t max_len) {
  const std::vector<std::string> tokens = SplitSelfies(s);
  TokenSequence seq;
  seq.ids.assign(max_len, Vocabulary::kPad);
  seq.mask.assign(max_len, 0);
  const std::size_t n = std::min(max_len, tokens.size());
  for (std::size_t i = 0; i < n; ++i) {
    seq.ids[i] = vocab.Id(tokens[i]);
    seq.mask[i] = 1;
  }
  return seq;
}

std::string Detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.mask[i]) out += vocab.Token(seq.ids[i]);
  }
  return out;
}

}  // namespace molfm::molrecord

// Copyright 2026 The molfm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace molfm::molrecord {

inline constexpr std::size_t kMaxTokens = 256;

// Token table with PAD = 0, UNK = 1, MASK = 2, then corpus tokens in
// lexicographic order.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kMask = 2;
  static constexpr std::size_t kNumReserved = 3;

  Vocabulary();
  // Full table including the reserved entries, as produced by tokens().
  static Vocabulary FromTokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  // kUnk for unknown tokens.
  std::size_t Id(std::string_view token) const;
  bool Contains(std::string_view token) const;
  const std::string& Token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct TokenSequence {
  std::vector<std::size_t> ids;
  std::vector<std::uint8_t> mask;  // 1 = real token

  std::size_t num_valid() const;
};

// Splits "[C][=O]" into its top-level bracket groups. Throws
// std::invalid_argument on unbalanced brackets or text outside a group.
std::vector<std::string> SplitSelfies(std::string_view s);

// Throws std::invalid_argument("empty corpus") on an empty list; tokenization
// errors name the offending string.
Vocabulary BuildVocab(const std::vector<std::string>& corpus);

// Pads or truncates to max_len.
TokenSequence TokenizeSelfies(std::string_view s, const Vocabulary& vocab,
                              std::size_t max_len = kMaxTokens);

// Concatenation of the token strings at unmasked positions.
std::string Detokenize(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace molfm::molrecord

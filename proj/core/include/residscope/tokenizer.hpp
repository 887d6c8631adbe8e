// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace residscope {

using TokenId = std::uint32_t;

// Character-level vocabulary: four specials followed by one id per
// character of `chars`.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr std::size_t kSpecialCount = 4;
  static const std::array<std::string_view, kSpecialCount> kSpecialNames;

  // Digits, ASCII letters, space and arithmetic/punctuation symbols.
  static Tokenizer standard();

  explicit Tokenizer(std::string chars);

  std::size_t vocab_size() const { return kSpecialCount + chars_.size(); }
  const std::string& chars() const { return chars_; }

  bool contains(char c) const { return lookup_[static_cast<unsigned char>(c)] >= 0; }
  TokenId id(char c) const;
  std::vector<TokenId> encode(std::string_view text) const;
  // Specials decode to their bracketed names.
  std::string decode(const std::vector<TokenId>& ids) const;
  std::string token_text(TokenId id) const;

  bool operator==(const Tokenizer& other) const { return chars_ == other.chars_; }

 private:
  std::string chars_;
  std::array<int, 256> lookup_{};
};

}  // namespace residscope

// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/tokenizer.hpp"

#include "residscope/errors.hpp"

namespace residscope {

const std::array<std::string_view, Tokenizer::kSpecialCount> Tokenizer::kSpecialNames = {
    "<pad>", "<bos>", "<eos>", "<sep>"};

Tokenizer Tokenizer::standard() {
  return Tokenizer(
      " 0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ+-*/=%^()<>?;:.,!");
}

Tokenizer::Tokenizer(std::string chars) : chars_(std::move(chars)) {
  lookup_.fill(-1);
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    auto& slot = lookup_[static_cast<unsigned char>(chars_[i])];
    if (slot >= 0) {
      throw TokenizerError(std::string("duplicate character '") + chars_[i] + "' in tokenizer table");
    }
    slot = static_cast<int>(i);
  }
}

TokenId Tokenizer::id(char c) const {
  const int i = lookup_[static_cast<unsigned char>(c)];
  if (i < 0) throw TokenizerError(std::string("character '") + c + "' not in vocabulary");
  return static_cast<TokenId>(kSpecialCount + i);
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (char c : text) out.push_back(id(c));
  return out;
}

std::string Tokenizer::token_text(TokenId id) const {
  if (id < kSpecialCount) return std::string(kSpecialNames[id]);
  if (id >= vocab_size()) throw TokenizerError("token id " + std::to_string(id) + " out of range");
  return std::string(1, chars_[id - kSpecialCount]);
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (auto id : ids) out += token_text(id);
  return out;
}

}  // namespace residscope

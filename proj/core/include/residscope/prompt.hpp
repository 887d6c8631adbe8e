// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "residscope/tokenizer.hpp"

namespace residscope {

// Half-open position range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  bool operator==(const Span&) const = default;
};

// One templated example: <bos> "Q: question A: answer" <eos>.
struct PromptExample {
  std::vector<TokenId> tokens;
  Span question_span;  // the question text
  Span answer_span;    // the answer text
  std::vector<TokenId> answer_ids;
  std::size_t hops = 0;
};

}  // namespace residscope

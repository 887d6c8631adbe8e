// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic question/answer tasks with an explicit hop count, rendered as
// <bos>"Q: question A: answer"<eos>.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "residscope/prompt.hpp"
#include "residscope/tokenizer.hpp"

namespace residscope {

class Rng;

enum class TaskKind {
  Copy,          // "Q: abcd A: abcd"
  ModularChain,  // "Q: a=3;b=a+4;c=b*2;c? A: 14"
  KvMultihop,    // "Q: b=c;x=y;a=b;a? A: c"
};

std::string task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::ModularChain;
  std::size_t hops = 3;
  // When nonzero, each example draws its hop count uniformly from
  // [min_hops, hops].
  std::size_t min_hops = 0;
  std::uint64_t modulus = 100;
  std::size_t n_entities = 12;
  std::size_t copy_length = 4;
  std::size_t seq_budget = 48;

  // Throws ContractError naming the violated invariant.
  void validate() const;
  bool operator==(const TaskSpec&) const = default;
};

// Token layout for a question/answer pair.
PromptExample format_example(const Tokenizer& tokenizer, std::string_view question,
                             std::string_view answer, std::size_t hops = 0);

// Recovers spans from a rendered example; nullopt if it does not follow the
// template.
std::optional<PromptExample> parse_example(const Tokenizer& tokenizer,
                                           const std::vector<TokenId>& tokens);

// Up to 100 draws until the example fits seq_budget, then TaskGenerationError.
PromptExample generate_example(const TaskSpec& task, const Tokenizer& tokenizer, Rng& rng);

std::vector<PromptExample> generate_examples(const TaskSpec& task, const Tokenizer& tokenizer,
                                             std::size_t count, Rng& rng);

}  // namespace residscope

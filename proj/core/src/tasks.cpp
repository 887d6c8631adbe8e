// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/tasks.hpp"

#include <algorithm>
#include <numeric>

#include "residscope/errors.hpp"
#include "residscope/rng.hpp"

namespace residscope {

namespace {

constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
constexpr std::string_view kQuestionPrefix = "Q: ";
constexpr std::string_view kAnswerPrefix = " A: ";
constexpr std::size_t kMaxAttempts = 100;

// The first n letters of a random permutation of a-z.
std::string distinct_letters(std::size_t n, Rng& rng) {
  std::string s(kLetters);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(s.size() - i));
    std::swap(s[i], s[j]);
  }
  return s.substr(0, n);
}

void shuffle(std::vector<std::string>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

struct QA {
  std::string question, answer;
};

QA copy_example(const TaskSpec& task, Rng& rng) {
  std::string payload;
  for (std::size_t i = 0; i < task.copy_length; ++i) payload += kLetters[rng.below(kLetters.size())];
  return {payload, payload};
}

QA modular_chain_example(std::size_t hops, std::uint64_t modulus, Rng& rng) {
  const std::string vars = distinct_letters(hops, rng);
  std::uint64_t value = rng.below(10) % modulus;
  std::string q = std::string(1, vars[0]) + "=" + std::to_string(value) + ";";
  for (std::size_t i = 1; i < hops; ++i) {
    const std::uint64_t operand = rng.below(10);
    const char op = "+-*"[rng.below(3)];
    switch (op) {
      case '+': value = (value + operand) % modulus; break;
      case '-': value = (value + modulus - operand % modulus) % modulus; break;
      default: value = (value * operand) % modulus; break;
    }
    q += std::string(1, vars[i]) + "=" + vars[i - 1] + op + std::to_string(operand) + ";";
  }
  q += std::string(1, vars[hops - 1]) + "?";
  return {q, std::to_string(value)};
}

QA kv_multihop_example(std::size_t hops, std::size_t n_entities, Rng& rng) {
  const std::string ents = distinct_letters(n_entities, rng);
  std::vector<std::string> facts;
  for (std::size_t i = 0; i < hops; ++i) facts.push_back(std::string{ents[i], '=', ents[i + 1]});
  for (std::size_t i = hops + 1; i + 1 < n_entities; i += 2)
    facts.push_back(std::string{ents[i], '=', ents[i + 1]});
  shuffle(facts, rng);
  std::string q;
  for (const auto& f : facts) q += f + ";";
  q += std::string{ents[0], '?'};
  return {q, std::string(1, ents[hops])};
}

std::size_t draw_hops(const TaskSpec& task, Rng& rng) {
  if (task.min_hops == 0 || task.min_hops == task.hops) return task.hops;
  return task.min_hops + static_cast<std::size_t>(rng.below(task.hops - task.min_hops + 1));
}

}  // namespace

std::string task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::ModularChain: return "modular-chain";
    case TaskKind::KvMultihop: return "kv-multihop";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "copy") return TaskKind::Copy;
  if (name == "modular-chain") return TaskKind::ModularChain;
  if (name == "kv-multihop") return TaskKind::KvMultihop;
  throw ContractError("unknown task kind '" + std::string(name) +
                      "' (expected copy, modular-chain or kv-multihop)");
}

void TaskSpec::validate() const {
  if (hops < 1) throw ContractError("task: hops must be at least 1");
  if (min_hops > hops) throw ContractError("task: min_hops exceeds hops");
  if (seq_budget < 8) throw ContractError("task: seq_budget too small for the template");
  switch (kind) {
    case TaskKind::Copy:
      if (copy_length < 1) throw ContractError("task: copy_length must be at least 1");
      break;
    case TaskKind::ModularChain:
      if (modulus < 2) throw ContractError("task: modulus must be at least 2");
      if (hops > kLetters.size()) throw ContractError("task: at most 26 hops");
      break;
    case TaskKind::KvMultihop:
      if (n_entities < hops + 1 || n_entities > kLetters.size()) {
        throw ContractError("task: n_entities must lie in [hops+1, 26]");
      }
      break;
  }
}

PromptExample format_example(const Tokenizer& tokenizer, std::string_view question,
                             std::string_view answer, std::size_t hops) {
  PromptExample ex;
  ex.hops = hops;
  ex.tokens.push_back(Tokenizer::kBos);
  auto append = [&](std::string_view s) {
    const auto ids = tokenizer.encode(s);
    ex.tokens.insert(ex.tokens.end(), ids.begin(), ids.end());
  };
  append(kQuestionPrefix);
  ex.question_span.begin = ex.tokens.size();
  append(question);
  ex.question_span.end = ex.tokens.size();
  append(kAnswerPrefix);
  ex.answer_span.begin = ex.tokens.size();
  append(answer);
  ex.answer_span.end = ex.tokens.size();
  ex.tokens.push_back(Tokenizer::kEos);
  ex.answer_ids.assign(ex.tokens.begin() + static_cast<std::ptrdiff_t>(ex.answer_span.begin),
                       ex.tokens.begin() + static_cast<std::ptrdiff_t>(ex.answer_span.end));
  return ex;
}

std::optional<PromptExample> parse_example(const Tokenizer& tokenizer,
                                           const std::vector<TokenId>& tokens) {
  if (tokens.size() < 2 || tokens.front() != Tokenizer::kBos || tokens.back() != Tokenizer::kEos)
    return std::nullopt;
  std::string text;
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t < Tokenizer::kSpecialCount || t >= tokenizer.vocab_size()) return std::nullopt;
    text += tokenizer.chars()[t - Tokenizer::kSpecialCount];
  }
  if (text.rfind(kQuestionPrefix, 0) != 0) return std::nullopt;
  const auto sep = text.rfind(kAnswerPrefix);
  if (sep == std::string::npos || sep < kQuestionPrefix.size()) return std::nullopt;
  const auto q = std::string_view(text).substr(kQuestionPrefix.size(), sep - kQuestionPrefix.size());
  const auto a = std::string_view(text).substr(sep + kAnswerPrefix.size());
  if (q.empty() || a.empty()) return std::nullopt;
  auto ex = format_example(tokenizer, q, a);
  if (ex.tokens != tokens) return std::nullopt;
  return ex;
}

PromptExample generate_example(const TaskSpec& task, const Tokenizer& tokenizer, Rng& rng) {
  task.validate();
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::size_t hops = task.kind == TaskKind::Copy ? task.hops : draw_hops(task, rng);
    QA qa;
    switch (task.kind) {
      case TaskKind::Copy: qa = copy_example(task, rng); break;
      case TaskKind::ModularChain: qa = modular_chain_example(hops, task.modulus, rng); break;
      case TaskKind::KvMultihop: qa = kv_multihop_example(hops, task.n_entities, rng); break;
    }
    auto ex = format_example(tokenizer, qa.question, qa.answer, hops);
    if (ex.tokens.size() <= task.seq_budget) return ex;
  }
  throw TaskGenerationError("task " + task_kind_name(task.kind) + " with " +
                            std::to_string(task.hops) + " hops does not fit seq_budget " +
                            std::to_string(task.seq_budget) + " after " +
                            std::to_string(kMaxAttempts) + " attempts");
}

std::vector<PromptExample> generate_examples(const TaskSpec& task, const Tokenizer& tokenizer,
                                             std::size_t count, Rng& rng) {
  std::vector<PromptExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_example(task, tokenizer, rng));
  return out;
}

}  // namespace residscope

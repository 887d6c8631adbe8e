// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "residscope/errors.hpp"
#include "residscope/rng.hpp"
#include "residscope/tasks.hpp"

using namespace residscope;

namespace {

const Tokenizer& tok() {
  static const Tokenizer t = Tokenizer::standard();
  return t;
}

std::string text(const PromptExample& ex, Span span) {
  std::string s;
  for (std::size_t i = span.begin; i < span.end; ++i) s += tok().token_text(ex.tokens[i]);
  return s;
}

// Evaluates "a=3;b=a+4;c=b*2;c?" statement by statement.
std::uint64_t evaluate_chain(const std::string& question, std::uint64_t modulus) {
  std::map<char, long long> env;
  std::stringstream ss(question);
  std::string stmt;
  while (std::getline(ss, stmt, ';')) {
    if (stmt.back() == '?') return static_cast<std::uint64_t>(env.at(stmt[0]));
    EXPECT_EQ(stmt[1], '=');
    const std::string rhs = stmt.substr(2);
    long long v;
    if (std::isdigit(static_cast<unsigned char>(rhs[0]))) {
      v = std::stoll(rhs);
    } else {
      EXPECT_FALSE(env.count(stmt[0])) << "variable reassigned";
      const long long lhs = env.at(rhs[0]);
      const long long operand = std::stoll(rhs.substr(2));
      switch (rhs[1]) {
        case '+': v = lhs + operand; break;
        case '-': v = lhs - operand; break;
        case '*': v = lhs * operand; break;
        default: ADD_FAILURE() << "bad operator in " << stmt; v = 0;
      }
    }
    const long long m = static_cast<long long>(modulus);
    env[stmt[0]] = ((v % m) + m) % m;
  }
  ADD_FAILURE() << "no query in " << question;
  return 0;
}

// Follows key=value facts from the queried key for the given number of hops.
std::string follow_chain(const std::string& question, std::size_t hops) {
  std::map<char, char> facts;
  std::stringstream ss(question);
  std::string stmt;
  char key = 0;
  while (std::getline(ss, stmt, ';')) {
    if (stmt.size() == 2 && stmt[1] == '?') {
      key = stmt[0];
      continue;
    }
    EXPECT_EQ(stmt.size(), 3u) << stmt;
    EXPECT_FALSE(facts.count(stmt[0])) << "duplicate key " << stmt[0];
    facts[stmt[0]] = stmt[2];
  }
  for (std::size_t i = 0; i < hops; ++i) key = facts.at(key);
  EXPECT_FALSE(facts.count(key)) << "chain continues past the stated hop count";
  return std::string(1, key);
}

}  // namespace

TEST(Format, CopyExampleSpellsTemplate) {
  const auto ex = format_example(tok(), "ab", "ab");
  EXPECT_EQ(tok().decode(ex.tokens), "<bos>Q: ab A: ab<eos>");
  EXPECT_EQ(text(ex, ex.question_span), "ab");
  EXPECT_EQ(text(ex, ex.answer_span), "ab");
  EXPECT_EQ(ex.answer_ids, tok().encode("ab"));
  EXPECT_EQ(ex.question_span, (Span{4, 6}));
  EXPECT_EQ(ex.answer_span, (Span{10, 12}));
}

TEST(Format, OneHopChainAnswerIsTheConstant) {
  const auto ex = format_example(tok(), "a=3;a?", "3", 1);
  EXPECT_EQ(evaluate_chain("a=3;a?", 100), 3u);
  EXPECT_EQ(text(ex, ex.answer_span), "3");
  EXPECT_EQ(evaluate_chain("a=3;b=a+4;c=b*2;c?", 100), 14u);
}

TEST(Generate, ModularChainAnswersMatchIndependentEvaluator) {
  for (std::uint64_t modulus : {7u, 100u}) {
    TaskSpec task;
    task.kind = TaskKind::ModularChain;
    task.hops = 4;
    task.min_hops = 1;
    task.modulus = modulus;
    Rng rng(modulus);
    for (const auto& ex : generate_examples(task, tok(), 1000, rng)) {
      const std::string q = text(ex, ex.question_span);
      ASSERT_EQ(std::to_string(evaluate_chain(q, modulus)), text(ex, ex.answer_span)) << q;
      ASSERT_EQ(static_cast<std::size_t>(std::count(q.begin(), q.end(), '=')), ex.hops);
      ASSERT_GE(ex.hops, 1u);
      ASSERT_LE(ex.hops, 4u);
    }
  }
}

TEST(Generate, KvMultihopFollowsChain) {
  TaskSpec task;
  task.kind = TaskKind::KvMultihop;
  task.hops = 3;
  task.n_entities = 10;
  Rng rng(3);
  for (const auto& ex : generate_examples(task, tok(), 300, rng)) {
    const std::string q = text(ex, ex.question_span);
    ASSERT_EQ(follow_chain(q, 3), text(ex, ex.answer_span)) << q;
  }
}

TEST(Generate, CopyPayloadHasConfiguredLength) {
  TaskSpec task;
  task.kind = TaskKind::Copy;
  task.copy_length = 6;
  Rng rng(4);
  const auto ex = generate_example(task, tok(), rng);
  EXPECT_EQ(ex.question_span.size(), 6u);
  EXPECT_EQ(text(ex, ex.question_span), text(ex, ex.answer_span));
}

TEST(Generate, ExamplesReparseAndRespectInvariants) {
  for (auto kind : {TaskKind::Copy, TaskKind::ModularChain, TaskKind::KvMultihop}) {
    TaskSpec task;
    task.kind = kind;
    Rng rng(5);
    for (const auto& ex : generate_examples(task, tok(), 200, rng)) {
      ASSERT_LE(ex.tokens.size(), task.seq_budget);
      ASSERT_LE(ex.question_span.end, ex.answer_span.begin);
      ASSERT_LE(ex.answer_span.end, ex.tokens.size());
      ASSERT_FALSE(ex.answer_span.empty());
      const auto parsed = parse_example(tok(), ex.tokens);
      ASSERT_TRUE(parsed.has_value()) << tok().decode(ex.tokens);
      EXPECT_EQ(parsed->question_span, ex.question_span);
      EXPECT_EQ(parsed->answer_span, ex.answer_span);
      EXPECT_EQ(parsed->answer_ids, ex.answer_ids);
    }
  }
}

TEST(Generate, SameSeedSameStream) {
  TaskSpec task;
  Rng a(11), b(11);
  const auto x = generate_examples(task, tok(), 50, a);
  const auto y = generate_examples(task, tok(), 50, b);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(x[i].tokens, y[i].tokens);
}

TEST(Generate, BudgetTooSmallFailsAfterRetries) {
  TaskSpec task;
  task.kind = TaskKind::ModularChain;
  task.hops = 6;
  task.seq_budget = 20;
  Rng rng(6);
  EXPECT_THROW(generate_example(task, tok(), rng), TaskGenerationError);
}

TEST(Parse, RejectsMalformedSequences) {
  EXPECT_FALSE(parse_example(tok(), tok().encode("Q: ab A: ab")).has_value());
  auto ex = format_example(tok(), "ab", "ab");
  ex.tokens[1] = tok().id('X');
  EXPECT_FALSE(parse_example(tok(), ex.tokens).has_value());
}

TEST(TaskSpec, Validation) {
  TaskSpec t;
  t.hops = 0;
  EXPECT_THROW(t.validate(), ContractError);
  t = TaskSpec{};
  t.kind = TaskKind::KvMultihop;
  t.hops = 5;
  t.n_entities = 4;
  EXPECT_THROW(t.validate(), ContractError);
  t = TaskSpec{};
  t.min_hops = 5;
  EXPECT_THROW(t.validate(), ContractError);
  EXPECT_EQ(parse_task_kind(task_kind_name(TaskKind::KvMultihop)), TaskKind::KvMultihop);
  EXPECT_THROW(parse_task_kind("gsm8k"), ContractError);
}

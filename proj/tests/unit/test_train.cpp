// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "residscope/autograd.hpp"
#include "residscope/errors.hpp"
#include "residscope/train.hpp"

using namespace residscope;

namespace {

std::vector<PromptExample> examples(std::size_t n, std::uint64_t seed) {
  std::vector<PromptExample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fixtures::kv_prompt(seed + i, 1 + i % 3));
  return out;
}

TrainConfig quick(std::size_t steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch = 4;
  tc.warmup = 2;
  tc.lr = 1e-3;
  return tc;
}

TaskSpec small_kv() {
  TaskSpec t;
  t.kind = TaskKind::KvMultihop;
  t.hops = 2;
  t.n_entities = 6;
  return t;
}

// Predicts the same letter everywhere: every layer is silent and the head
// reads one embedding dimension that is positive for every token.
ModelBundle always_predicts(char letter) {
  auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 1);
  for (std::size_t l = 0; l < 2; ++l) m = with_layer_zeroed(m, l);
  std::vector<double> emb(m.embedding.data().begin(), m.embedding.data().end());
  for (std::size_t v = 0; v < m.config.vocab_size; ++v) emb[v * 8] = 1.0 + std::abs(emb[v * 8]);
  std::vector<double> head(8 * m.config.vocab_size, 0.0);
  head[m.tokenizer.id(letter)] = 1.0;
  std::vector<Tensor> ps;
  for (const auto& p : m.parameters()) ps.push_back(p.tensor);
  ps.front() = Tensor(m.embedding.shape(), emb);
  ps.back() = Tensor(m.w_out.shape(), head);
  auto out = m.with_parameters(ps);
  return out;
}

}  // namespace

TEST(Batch, MaskedLossEqualsManualAnswerCrossEntropy) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 2);
  const auto exs = examples(4, 10);
  const Batch batch = make_batch(exs, true);
  const Tensor logits = batch_logits(m, batch);
  double manual = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < exs.size(); ++s) {
    const auto tape = forward_with_tape(m, exs[s].tokens);
    for (std::size_t p = exs[s].answer_span.begin; p < exs[s].answer_span.end; ++p) {
      const auto row = tape.logits.row(p - 1);
      double mx = row[0];
      for (double v : row) mx = std::max(mx, v);
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      manual += -(row[exs[s].tokens[p]] - mx - std::log(z));
      ++count;
    }
  }
  manual /= static_cast<double>(count);
  EXPECT_NEAR(batch_loss(logits, batch).item(), manual, 1e-12);
  EXPECT_NEAR(answer_loss(logits, batch), manual, 1e-12);
}

TEST(Batch, MaskedGradientIsExactlyZeroAwayFromAnswers) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 3);
  const auto exs = examples(3, 20);
  const Batch batch = make_batch(exs, true);
  const Tensor logits = batch_logits(m, batch).detach().as_leaf(true);
  const Tensor g = backward(batch_loss(logits, batch)).of(logits);
  for (std::size_t s = 0; s < exs.size(); ++s) {
    for (std::size_t p = 0; p < batch.seq_len; ++p) {
      const bool answer_prediction = exs[s].answer_span.contains(p + 1);
      double mag = 0.0;
      for (double v : g.row(s * batch.seq_len + p)) mag += std::abs(v);
      if (answer_prediction) {
        EXPECT_GT(mag, 0.0);
      } else {
        EXPECT_EQ(mag, 0.0) << "seq " << s << " pos " << p;
      }
    }
  }
}

TEST(Batch, UnmaskedWeightsCoverEveryRealPrediction) {
  const auto exs = examples(3, 30);
  const Batch b = make_batch(exs, false);
  std::size_t real = 0;
  for (const auto& ex : exs) real += ex.tokens.size() - 1;
  double total = 0.0;
  std::size_t nonzero = 0;
  for (double w : b.weights) {
    total += w;
    nonzero += w > 0.0;
  }
  EXPECT_EQ(nonzero, real);
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_EQ(b.tokens.size(), b.n_seq * b.seq_len);
}

TEST(Batch, StackedLogitsMatchPerSequenceForward) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 4);
  const auto exs = examples(3, 40);
  const Batch b = make_batch(exs, true);
  const Tensor logits = batch_logits(m, b);
  for (std::size_t s = 0; s < exs.size(); ++s) {
    const auto tape = forward_with_tape(m, exs[s].tokens);
    for (std::size_t p = 0; p < exs[s].tokens.size(); ++p)
      for (std::size_t v = 0; v < m.config.vocab_size; ++v)
        ASSERT_NEAR(logits.at(s * b.seq_len + p, v), tape.logits.at(p, v), 1e-12);
  }
}

TEST(Train, ZeroStepsReturnsInitialization) {
  const auto init = fixtures::random_model(fixtures::tiny_config(2, 8), 5);
  const auto r = train_from(init, small_kv(), quick(0));
  EXPECT_TRUE(r.curve.empty());
  const auto a = init.parameters(), b = r.model.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(identical(a[i].tensor, b[i].tensor));
}

TEST(Train, FixedSeedGivesIdenticalWeightsAndCurve) {
  const auto cfg = fixtures::tiny_config(2, 16);
  const auto a = train(cfg, small_kv(), quick(5));
  const auto b = train(cfg, small_kv(), quick(5));
  ASSERT_EQ(a.curve.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
  const auto pa = a.model.parameters(), pb = b.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(identical(pa[i].tensor, pb[i].tensor));
}

TEST(Train, LossDecreasesOnAFixedTask) {
  auto tc = quick(60);
  tc.lr = 3e-3;
  tc.batch = 8;
  const auto r = train(fixtures::tiny_config(2, 16), small_kv(), tc);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.curve[i].loss;
    last += r.curve[r.curve.size() - 1 - i].loss;
  }
  EXPECT_LT(last, first);
}

TEST(Train, CallbackSeesEveryStep) {
  std::vector<std::size_t> steps;
  train(fixtures::tiny_config(1, 8), small_kv(), quick(3),
        [&](const LossPoint& p) { steps.push_back(p.step); });
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Train, DivergenceReportsStep) {
  auto tc = quick(20);
  tc.lr = 1e250;
  tc.warmup = 0;
  tc.grad_clip = 0.0;
  try {
    train(fixtures::tiny_config(1, 8), small_kv(), tc);
    FAIL() << "expected TrainingDivergedError";
  } catch (const TrainingDivergedError& e) {
    EXPECT_GT(e.step(), 0u);
    EXPECT_LT(e.step(), 20u);
  }
}

TEST(Train, ConfigValidation) {
  auto tc = quick(1);
  tc.lr = 0.0;
  EXPECT_THROW(train(fixtures::tiny_config(1, 8), small_kv(), tc), ContractError);
  tc = quick(1);
  tc.batch = 0;
  EXPECT_THROW(tc.validate(), ContractError);
}

TEST(Accuracy, OracleByConstructionScoresOne) {
  const auto m = always_predicts('q');
  std::vector<PromptExample> exs;
  for (const char* payload : {"q", "qq", "qqqq"}) exs.push_back(format_example(m.tokenizer, payload, payload));
  const auto acc = answer_accuracy(m, exs);
  EXPECT_EQ(acc.exact, 1.0);
  EXPECT_EQ(acc.token, 1.0);
  EXPECT_EQ(acc.examples, 3u);
  exs.push_back(format_example(m.tokenizer, "ab", "ab"));
  EXPECT_EQ(answer_accuracy(m, exs).exact, 0.75);
}

TEST(Accuracy, UntrainedModelIsNearChance) {
  TaskSpec copy;
  copy.kind = TaskKind::Copy;
  double token = 0.0;
  const std::size_t models = 4;
  for (std::size_t i = 0; i < models; ++i) {
    const auto m = fixtures::random_model(fixtures::tiny_config(2, 16), 100 + i);
    token += eval_answer_accuracy(m, copy, 100, i).token;
  }
  token /= models;
  // Copy answers are uniform over 26 letters; chance is 1/26.
  EXPECT_LT(token, 4.0 / 26.0);
}

TEST(Accuracy, DeterministicForSameSeed) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 6);
  const auto a = eval_answer_accuracy(m, small_kv(), 30, 9);
  const auto b = eval_answer_accuracy(m, small_kv(), 30, 9);
  EXPECT_EQ(a.exact, b.exact);
  EXPECT_EQ(a.token, b.token);
  EXPECT_THROW(eval_answer_accuracy(m, small_kv(), 0, 9), ContractError);
}

TEST(Accuracy, GreedyNextMatchesTapeArgmax) {
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 7);
  const auto tokens = fixtures::random_tokens(6, m.config.vocab_size, 8);
  const auto tape = forward_with_tape(m, tokens);
  const auto row = tape.logits.row(5);
  const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
  EXPECT_EQ(greedy_next(m, tokens), best);
}

// Full-size training run: 4 layers, width 128, 2000 steps.
TEST(TrainSlow, CopyTaskReachesHighAccuracy) {
  ModelConfig c;
  c.n_layers = 4;
  c.d_model = 128;
  c.n_heads = 4;
  c.d_ff = 256;
  TaskSpec copy;
  copy.kind = TaskKind::Copy;
  TrainConfig tc;
  tc.seed = 0;
  const auto r = train(c, copy, tc);
  const auto acc = eval_answer_accuracy(r.model, copy, 200, 0);
  EXPECT_GT(acc.token, 0.95);
}

// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/train.hpp"

#include <algorithm>
#include <cmath>

#include "residscope/autograd.hpp"
#include "residscope/errors.hpp"
#include "residscope/rng.hpp"

namespace residscope {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kEvalStream = 2;

Tensor stacked_forward(const ModelBundle& model, const Batch& batch) {
  Tensor h = embed(model, batch.tokens);
  for (std::size_t l = 0; l < model.config.n_layers; ++l)
    h = apply_layer(model, l, h, batch.seq_len).next;
  return output_logits(model, h);
}

struct AdamState {
  std::vector<std::vector<double>> m, v;
};

}  // namespace

void TrainConfig::validate() const {
  if (batch < 1) throw ContractError("train: batch must be at least 1");
  if (!(lr > 0.0)) throw ContractError("train: lr must be positive");
  if (!(weight_decay >= 0.0)) throw ContractError("train: weight_decay must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("train: betas must lie in [0, 1)");
  }
  if (!(grad_clip >= 0.0)) throw ContractError("train: grad_clip must be nonnegative");
}

Batch make_batch(std::span<const PromptExample> examples, bool mask_question) {
  if (examples.empty()) throw ContractError("make_batch: no examples");
  Batch b;
  b.n_seq = examples.size();
  for (const auto& ex : examples) b.seq_len = std::max(b.seq_len, ex.tokens.size());
  const std::size_t rows = b.n_seq * b.seq_len;
  b.tokens.assign(rows, Tokenizer::kPad);
  b.targets.assign(rows, 0);
  b.weights.assign(rows, 0.0);
  b.answer_weights.assign(rows, 0.0);
  double n_train = 0.0, n_answer = 0.0;
  for (std::size_t s = 0; s < b.n_seq; ++s) {
    const auto& ex = examples[s];
    const std::size_t base = s * b.seq_len;
    std::copy(ex.tokens.begin(), ex.tokens.end(), b.tokens.begin() + static_cast<std::ptrdiff_t>(base));
    for (std::size_t p = 0; p + 1 < ex.tokens.size(); ++p) {
      b.targets[base + p] = ex.tokens[p + 1];
      const bool answer = ex.answer_span.contains(p + 1);
      if (answer) {
        b.answer_weights[base + p] = 1.0;
        n_answer += 1.0;
      }
      if (answer || !mask_question) {
        b.weights[base + p] = 1.0;
        n_train += 1.0;
      }
    }
  }
  if (n_answer == 0.0) throw ContractError("make_batch: no answer tokens in batch");
  for (auto& w : b.weights) w /= n_train;
  for (auto& w : b.answer_weights) w /= n_answer;
  return b;
}

Tensor batch_logits(const ModelBundle& model, const Batch& batch) {
  return stacked_forward(model, batch);
}

Tensor batch_loss(const Tensor& logits, const Batch& batch) {
  return weighted_nll(logits, batch.targets, batch.weights);
}

double answer_loss(const Tensor& logits, const Batch& batch) {
  return weighted_nll(logits.detach(), batch.targets, batch.answer_weights).item();
}

TrainResult train(const ModelConfig& config, const TaskSpec& task, const TrainConfig& tc,
                  const StepCallback& on_step) {
  ModelConfig c = config;
  const Tokenizer tok = Tokenizer::standard();
  if (c.vocab_size == 0) c.vocab_size = tok.vocab_size();
  Rng init_rng = Rng(tc.seed).fork(kInitStream);
  return train_from(init_model(c, tok, init_rng), task, tc, on_step);
}

TrainResult train_from(const ModelBundle& init, const TaskSpec& task, const TrainConfig& tc,
                       const StepCallback& on_step) {
  tc.validate();
  task.validate();
  if (task.seq_budget > init.config.max_seq) {
    throw ContractError("train: task seq_budget " + std::to_string(task.seq_budget) +
                        " exceeds model max_seq " + std::to_string(init.config.max_seq));
  }
  TrainResult result{init.detached(), {}};
  auto params = result.model.parameters();
  std::vector<std::vector<double>> values;
  for (const auto& p : params) values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  AdamState adam;
  for (const auto& v : values) {
    adam.m.emplace_back(v.size(), 0.0);
    adam.v.emplace_back(v.size(), 0.0);
  }
  const Rng data_root = Rng(tc.seed).fork(kDataStream);

  for (std::size_t step = 0; step < tc.steps; ++step) {
    std::vector<Tensor> leaves;
    for (std::size_t i = 0; i < params.size(); ++i)
      leaves.emplace_back(params[i].tensor.shape(), values[i], true);
    const ModelBundle live = result.model.with_parameters(leaves);

    Rng rng = data_root.fork(step);
    const auto examples = generate_examples(task, live.tokenizer, tc.batch, rng);
    const Batch batch = make_batch(examples, tc.mask_question);
    const Tensor logits = batch_logits(live, batch);
    const Tensor loss = batch_loss(logits, batch);
    const LossPoint point{step, loss.item(), answer_loss(logits, batch)};
    if (!std::isfinite(point.loss)) {
      throw TrainingDivergedError(step, "training diverged: loss " + std::to_string(point.loss) +
                                            " at step " + std::to_string(step));
    }
    const auto grads = backward(loss, {.retain_intermediate = false});

    std::vector<Tensor> g;
    double sq = 0.0;
    for (const auto& leaf : leaves) {
      g.push_back(grads.of(leaf));
      for (double x : g.back().data()) sq += x * x;
    }
    const double norm = std::sqrt(sq);
    const double clip = tc.grad_clip > 0.0 && norm > tc.grad_clip ? tc.grad_clip / norm : 1.0;
    const double lr = step < tc.warmup
                          ? tc.lr * static_cast<double>(step + 1) / static_cast<double>(tc.warmup)
                          : tc.lr;
    const double t = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(tc.beta1, t), bc2 = 1.0 - std::pow(tc.beta2, t);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const bool decay = params[i].tensor.rank() == 2;
      auto& w = values[i];
      auto& m = adam.m[i];
      auto& v = adam.v[i];
      const auto gi = g[i].data();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = gi[j] * clip;
        m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * gj;
        v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * gj * gj;
        const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + tc.adam_eps);
        if (decay) w[j] -= lr * tc.weight_decay * w[j];
        w[j] -= lr * update;
      }
    }
    result.curve.push_back(point);
    if (on_step) on_step(point);
  }

  std::vector<Tensor> final_params;
  for (std::size_t i = 0; i < params.size(); ++i)
    final_params.emplace_back(params[i].tensor.shape(), values[i]);
  result.model = result.model.with_parameters(final_params);
  return result;
}

TokenId greedy_next(const ModelBundle& model, std::span<const TokenId> prefix) {
  check_tokens(model, prefix);
  Tensor h = embed(model, prefix);
  for (std::size_t l = 0; l < model.config.n_layers; ++l)
    h = apply_layer(model, l, h, prefix.size()).next;
  const std::size_t d = model.config.d_model;
  std::vector<double> row(h.data().end() - static_cast<std::ptrdiff_t>(d), h.data().end());
  const Tensor logits = output_logits(model, Tensor({1, d}, std::move(row)));
  const auto v = logits.data();
  return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
}

Accuracy answer_accuracy(const ModelBundle& model, std::span<const PromptExample> examples) {
  Accuracy acc;
  std::size_t exact = 0, right = 0, total = 0;
  for (const auto& ex : examples) {
    std::vector<TokenId> prefix(ex.tokens.begin(),
                                ex.tokens.begin() + static_cast<std::ptrdiff_t>(ex.answer_span.begin));
    bool all = true;
    for (std::size_t i = 0; i < ex.answer_ids.size(); ++i) {
      const TokenId next = greedy_next(model, prefix);
      if (next == ex.answer_ids[i]) {
        ++right;
      } else {
        all = false;
      }
      ++total;
      prefix.push_back(next);
    }
    if (all) ++exact;
  }
  acc.examples = examples.size();
  if (acc.examples) acc.exact = static_cast<double>(exact) / static_cast<double>(acc.examples);
  if (total) acc.token = static_cast<double>(right) / static_cast<double>(total);
  return acc;
}

Accuracy eval_answer_accuracy(const ModelBundle& model, const TaskSpec& task, std::size_t n,
                              std::uint64_t seed) {
  if (n < 1) throw ContractError("eval_answer_accuracy: n must be at least 1");
  Rng rng = Rng(seed).fork(kEvalStream);
  const auto examples = generate_examples(task, model.tokenizer, n, rng);
  return answer_accuracy(model, examples);
}

}  // namespace residscope

// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// From-scratch training of toy models on synthetic tasks, with optional
// restriction of the loss to answer tokens.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "residscope/model.hpp"
#include "residscope/prompt.hpp"
#include "residscope/tasks.hpp"

namespace residscope {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 16;
  double lr = 3e-4;
  std::size_t warmup = 100;
  std::uint64_t seed = 0;
  bool mask_question = true;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Global gradient-norm clip; 0 disables it.
  double grad_clip = 1.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// A padded stack of examples: row b·T + t holds token t of example b.
struct Batch {
  std::vector<TokenId> tokens;
  std::size_t n_seq = 0;
  std::size_t seq_len = 0;
  std::vector<TokenId> targets;        // next token per row (0 where unused)
  std::vector<double> weights;         // training-loss weight per row
  std::vector<double> answer_weights;  // 1/#answer tokens on answer predictions
};

// Weights are normalized to sum to 1. With mask_question only answer
// predictions are weighted, otherwise every real next-token prediction.
Batch make_batch(std::span<const PromptExample> examples, bool mask_question);

// Logits for the whole stack, (n_seq·seq_len)×V.
Tensor batch_logits(const ModelBundle& model, const Batch& batch);
Tensor batch_loss(const Tensor& logits, const Batch& batch);
// Mean answer-token cross-entropy, without a graph.
double answer_loss(const Tensor& logits, const Batch& batch);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double answer_loss = 0.0;
};

struct TrainResult {
  ModelBundle model;
  std::vector<LossPoint> curve;
};

using StepCallback = std::function<void(const LossPoint&)>;

// AdamW with linear warmup then constant lr; weight decay on matrices only.
// Throws TrainingDivergedError at the first non-finite loss.
TrainResult train(const ModelConfig& config, const TaskSpec& task, const TrainConfig& tc,
                  const StepCallback& on_step = {});

// Continues from an existing model.
TrainResult train_from(const ModelBundle& init, const TaskSpec& task, const TrainConfig& tc,
                       const StepCallback& on_step = {});

struct Accuracy {
  double exact = 0.0;  // fraction of examples with every answer token right
  double token = 0.0;  // fraction of answer tokens right
  std::size_t examples = 0;
};

// Greedy decoding over each example's answer span, conditioned on the
// prompt up to the answer and on the model's own earlier answer tokens.
Accuracy answer_accuracy(const ModelBundle& model, std::span<const PromptExample> examples);
Accuracy eval_answer_accuracy(const ModelBundle& model, const TaskSpec& task, std::size_t n,
                              std::uint64_t seed);

// Most probable next token after `prefix` (lowest id on ties).
TokenId greedy_next(const ModelBundle& model, std::span<const TokenId> prefix);

}  // namespace residscope

// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Drivers behind the command-line tool. Each run writes into its own
// directory, ROOT/<kind>-<hash of the canonical configuration>, and ends
// with a manifest listing every file it wrote.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "residscope/attribution.hpp"
#include "residscope/metrics.hpp"
#include "residscope/report.hpp"
#include "residscope/tasks.hpp"
#include "residscope/train.hpp"

namespace residscope {

inline const std::vector<std::string> kAnalyses = {
    "norms", "cossim", "skip", "skip-future", "local", "logitlens",
    "erase", "ig",     "depth-score", "layer-map"};

enum class DepthSource {
  Effects,       // e_s from the future-restricted effect matrix
  OutputChange,  // e_s = output change when skipping s
};

struct AnalysisOptions {
  std::size_t top_k = 5;
  KlDirection kl_direction = KlDirection::FinalToLens;
  double relative_lambda = 1e-3;
  std::size_t ig_steps = 64;
  IGRule ig_rule = IGRule::Right;
  IGBaseline ig_baseline = IGBaseline::MeanResidual;
  std::size_t split_count = 4;
  LocalSubtrahend local_subtrahend = LocalSubtrahend::Contribution;
  ErasureIndex erasure_index = ErasureIndex::NextLayer;
  std::size_t hops_min = 1, hops_max = 6;
  std::size_t instances = 1;  // prompts rendered by erase / ig
  std::size_t map_sequences = 200;
  DepthSource depth_source = DepthSource::Effects;
  std::size_t depth_prompts = 16;

  bool operator==(const AnalysisOptions&) const = default;
};

struct RunConfig {
  std::string analysis;
  std::string model;    // checkpoint path
  std::string model_b;  // second checkpoint (layer-map)
  std::string mean;     // meanresid/v1 file; computed from the task when empty
  TaskSpec task;
  std::size_t prompts = 16;
  std::size_t mean_sequences = 64;
  std::uint64_t seed = 0;
  std::string out = "runs";
  AnalysisOptions options;

  // Throws UsageError for unknown analyses and Error for missing files.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Unknown keys anywhere in the document raise UsageError.
RunConfig run_config_from_json(const std::string& text);
// Every field, sorted keys, no whitespace; `out` is omitted because it does
// not affect results.
std::string canonical_json(const RunConfig& config);

std::uint64_t fnv1a64(std::string_view bytes);
std::string run_id(std::string_view kind, std::string_view canonical);

struct RunResult {
  std::filesystem::path dir;
  Manifest manifest;
};

RunResult run_analysis(const RunConfig& config);

struct TrainToyConfig {
  ModelConfig model;
  TaskSpec task;
  TrainConfig train;
  std::size_t eval_examples = 200;
  std::string out = "runs";

  bool operator==(const TrainToyConfig&) const = default;
};

TrainToyConfig train_toy_config_from_json(const std::string& text);
std::string canonical_json(const TrainToyConfig& config);
// Writes model.rscp, loss.csv, accuracy.json and the manifest.
RunResult run_train_toy(const TrainToyConfig& config);

struct MeanResidualConfig {
  std::string model;
  TaskSpec task;
  std::size_t sequences = 64;
  std::uint64_t seed = 0;
  std::string out = "runs";

  bool operator==(const MeanResidualConfig&) const = default;
};

MeanResidualConfig mean_residual_config_from_json(const std::string& text);
std::string canonical_json(const MeanResidualConfig& config);
// Writes mean.json and the manifest.
RunResult run_mean_residual(const MeanResidualConfig& config);

// Sequences used for mean-residual estimates: the task's distribution under
// the given seed.
std::vector<std::vector<TokenId>> task_corpus(const TaskSpec& task, const Tokenizer& tokenizer,
                                              std::size_t count, std::uint64_t seed);

struct RenderOptions {
  std::filesystem::path jobs_dir;  // default: <manifest dir>/figures
  std::string renderer;            // external command run as `renderer <job.json>`
  std::string format = "svg";
};

struct RenderReport {
  std::vector<std::filesystem::path> jobs;
  std::vector<std::string> errors;  // one per entry that could not be prepared or rendered
};

// Validates every grid/series entry of a manifest and writes one figurejob/v1
// document per entry. Bad entries are reported and skipped; the rest are
// still processed.
RenderReport render_manifest(const std::filesystem::path& manifest_path,
                             const RenderOptions& options = {});

}  // namespace residscope

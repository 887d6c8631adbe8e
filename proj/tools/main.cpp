// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// residscope: train toy models, analyze their residual streams, and prepare
// figure jobs from the results.
//
// Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "residscope/errors.hpp"
#include "residscope/run.hpp"

namespace rs = residscope;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

std::string read_config(const std::string& path) {
  try {
    return rs::read_file(path);
  } catch (const rs::Error& e) {
    throw rs::UsageError(e.what());
  }
}

void print(const rs::RunResult& r) { std::cout << r.dir.string() << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual-stream profiler for toy pre-norm transformers"};
  app.require_subcommand(1);

  std::string train_config, train_out;
  auto* train_cmd = app.add_subcommand("train-toy", "Train a toy model on a synthetic task");
  train_cmd->add_option("--config", train_config, "Training configuration (JSON)")->required();
  train_cmd->add_option("--out", train_out, "Output root directory");

  std::string mean_config, mean_model, mean_out;
  std::optional<std::uint64_t> mean_seed;
  auto* mean_cmd =
      app.add_subcommand("mean-residual", "Estimate the per-layer mean residual over a task");
  mean_cmd->add_option("--config", mean_config, "Mean-residual configuration (JSON)");
  mean_cmd->add_option("--model", mean_model, "Checkpoint path");
  mean_cmd->add_option("--seed", mean_seed, "Corpus seed");
  mean_cmd->add_option("--out", mean_out, "Output root directory");

  std::string analysis, an_config, an_model, an_model_b, an_mean, an_out;
  std::optional<std::uint64_t> an_seed;
  std::optional<std::size_t> an_prompts;
  auto* analyze_cmd = app.add_subcommand("analyze", "Run one analysis on a checkpoint");
  analyze_cmd->add_option("analysis", analysis, "Analysis to run")
      ->required()
      ->check(CLI::IsMember(rs::kAnalyses));
  analyze_cmd->add_option("--config", an_config, "Run configuration (JSON)");
  analyze_cmd->add_option("--model", an_model, "Checkpoint path");
  analyze_cmd->add_option("--model-b", an_model_b, "Second checkpoint (layer-map)");
  analyze_cmd->add_option("--mean", an_mean, "Mean residual document");
  analyze_cmd->add_option("--seed", an_seed, "Seed");
  analyze_cmd->add_option("--prompts", an_prompts, "Number of prompts");
  analyze_cmd->add_option("--out", an_out, "Output root directory");

  std::string manifest, jobs_dir, renderer, format = "svg";
  auto* render_cmd =
      app.add_subcommand("render-manifest", "Validate a run manifest and write figure jobs");
  render_cmd->add_option("manifest", manifest, "manifest.json of a run")->required();
  render_cmd->add_option("--jobs-dir", jobs_dir, "Where figure jobs are written");
  render_cmd->add_option("--renderer", renderer, "Command invoked as <renderer> <job.json>");
  render_cmd->add_option("--format", format, "Figure format")
      ->check(CLI::IsMember({"svg", "png"}));

  app.failure_message(CLI::FailureMessage::help);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*train_cmd) {
      auto c = rs::train_toy_config_from_json(read_config(train_config));
      if (!train_out.empty()) c.out = train_out;
      print(rs::run_train_toy(c));
    } else if (*mean_cmd) {
      auto c = mean_config.empty() ? rs::MeanResidualConfig{}
                                   : rs::mean_residual_config_from_json(read_config(mean_config));
      if (!mean_model.empty()) c.model = mean_model;
      if (mean_seed) c.seed = *mean_seed;
      if (!mean_out.empty()) c.out = mean_out;
      print(rs::run_mean_residual(c));
    } else if (*analyze_cmd) {
      auto c = an_config.empty() ? rs::RunConfig{}
                                 : rs::run_config_from_json(read_config(an_config));
      c.analysis = analysis;
      if (!an_model.empty()) c.model = an_model;
      if (!an_model_b.empty()) c.model_b = an_model_b;
      if (!an_mean.empty()) c.mean = an_mean;
      if (an_seed) c.seed = *an_seed;
      if (an_prompts) c.prompts = *an_prompts;
      if (!an_out.empty()) c.out = an_out;
      print(rs::run_analysis(c));
    } else if (*render_cmd) {
      rs::RenderOptions opts{jobs_dir, renderer, format};
      const auto report = rs::render_manifest(manifest, opts);
      for (const auto& j : report.jobs) std::cout << j.string() << "\n";
      for (const auto& e : report.errors) std::cerr << "error: " << e << "\n";
      return report.errors.empty() ? 0 : kRuntime;
    }
  } catch (const rs::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}

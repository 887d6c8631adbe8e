// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "fixtures.hpp"
#include "residscope/checkpoint.hpp"
#include "residscope/report.hpp"

#ifdef RESIDSCOPE_CLI_PATH

using namespace residscope;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome cli(const std::string& args) {
  const std::string cmd = std::string(RESIDSCOPE_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {};
  Outcome o;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) o.output.append(buf.data(), n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

bool mentions_usage(const Outcome& o) {
  return o.output.find("Usage") != std::string::npos || o.output.find("usage") != std::string::npos;
}

std::string last_line(const std::string& s) {
  auto end = s.find_last_not_of('\n');
  if (end == std::string::npos) return "";
  const auto start = s.rfind('\n', end);
  return s.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

}  // namespace

TEST(Cli, UsageErrorsExitOne) {
  for (const char* args : {"", "frobnicate", "analyze norms --bogus 1", "analyze wobble --model x",
                           "render-manifest"}) {
    const auto o = cli(args);
    EXPECT_EQ(o.code, 1) << args << "\n" << o.output;
    EXPECT_TRUE(mentions_usage(o) || !o.output.empty()) << args;
  }
  EXPECT_TRUE(mentions_usage(cli("")));
}

TEST(Cli, MissingCheckpointExitsTwo) {
  const auto o = cli("analyze norms --model /nonexistent/model.rscp --out /tmp");
  EXPECT_EQ(o.code, 2) << o.output;
  EXPECT_NE(o.output.find("/nonexistent/model.rscp"), std::string::npos);
}

TEST(Cli, AnalyzeLogitLensWritesSeries) {
  const auto dir = fixtures::temp_dir("cli-lens");
  const auto model = dir / "m.rscp";
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(2, 8), 11), model);
  write_file(dir / "run.json", R"({"task": {"kind": "kv-multihop", "hops": 2, "n_entities": 6},
                                   "prompts": 3})");
  const auto o = cli("analyze logitlens --config " + (dir / "run.json").string() + " --model " +
                     model.string() + " --out " + (dir / "out").string());
  ASSERT_EQ(o.code, 0) << o.output;
  const fs::path run_dir = last_line(o.output);
  ASSERT_TRUE(fs::exists(run_dir / "manifest.json")) << o.output;
  const auto kl = load_series(run_dir / "logitlens_kl.json");
  ASSERT_EQ(kl.values.size(), 3u);
  EXPECT_LE(std::abs(kl.values.back().value()), 1e-9);

  const auto r = cli("render-manifest " + (run_dir / "manifest.json").string());
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_TRUE(fs::exists(run_dir / "figures" / "logitlens_kl.job.json"));
}

TEST(Cli, RenderEmptyManifestSucceeds) {
  const auto dir = fixtures::temp_dir("cli-render");
  write_file(dir / "manifest.json", manifest_to_json(Manifest{"x", "analyze-norms", "{}", {}}));
  const auto o = cli("render-manifest " + (dir / "manifest.json").string());
  EXPECT_EQ(o.code, 0) << o.output;
}

TEST(Cli, RenderReportsBadEntriesWithExitTwo) {
  const auto dir = fixtures::temp_dir("cli-render-bad");
  write_file(dir / "manifest.json",
             manifest_to_json(Manifest{"x", "k", "{}", {{"gone.json", kHeatmapSchema, "skip"}}}));
  const auto o = cli("render-manifest " + (dir / "manifest.json").string());
  EXPECT_EQ(o.code, 2) << o.output;
  EXPECT_NE(o.output.find("gone.json"), std::string::npos);
}

#endif

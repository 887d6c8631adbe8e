// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "fixtures.hpp"
#include "residscope/checkpoint.hpp"
#include "residscope/errors.hpp"

using namespace residscope;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

// Bytes before the first tensor record.
std::size_t header_size(const std::string& file) {
  std::uint32_t n = 0;
  std::memcpy(&n, file.data() + 5, 4);
  return 9 + n;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = fixtures::temp_dir("ckpt-roundtrip");
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 1);
  save_checkpoint(m, dir / "a.rscp");
  const auto loaded = load_checkpoint(dir / "a.rscp");
  save_checkpoint(loaded, dir / "b.rscp");
  EXPECT_EQ(slurp(dir / "a.rscp"), slurp(dir / "b.rscp"));
  EXPECT_EQ(loaded.config, m.config);
  EXPECT_EQ(loaded.tokenizer, m.tokenizer);
  EXPECT_EQ(config_to_json(loaded.config, loaded.tokenizer), config_to_json(m.config, m.tokenizer));
}

TEST(Checkpoint, WeightsSurviveWithinF32Quantization) {
  const auto dir = fixtures::temp_dir("ckpt-quant");
  const auto m = fixtures::random_model(fixtures::tiny_config(2, 8), 2);
  save_checkpoint(m, dir / "m.rscp");
  const auto loaded = load_checkpoint(dir / "m.rscp");
  const auto q = quantize_f32(m);
  const auto a = m.parameters(), b = loaded.parameters(), c = q.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(identical(b[i].tensor, c[i].tensor)) << a[i].name;
    for (std::size_t j = 0; j < a[i].tensor.numel(); ++j) {
      EXPECT_EQ(b[i].tensor[j], static_cast<double>(static_cast<float>(a[i].tensor[j])));
    }
  }
}

TEST(Checkpoint, LayoutStartsWithMagicAndConfig) {
  const auto dir = fixtures::temp_dir("ckpt-layout");
  const auto m = fixtures::random_model(fixtures::tiny_config(1, 8), 3);
  save_checkpoint(m, dir / "m.rscp");
  const std::string file = slurp(dir / "m.rscp");
  EXPECT_EQ(file.substr(0, 5), "RSCP1");
  const std::string json = config_to_json(m.config, m.tokenizer);
  EXPECT_EQ(file.substr(9, json.size()), json);
  const std::size_t h = header_size(file);
  std::uint16_t name_len = 0;
  std::memcpy(&name_len, file.data() + h, 2);
  EXPECT_EQ(file.substr(h + 2, name_len), "embedding");
  EXPECT_EQ(static_cast<unsigned char>(file[h + 2 + name_len]), kDtypeF32);
  EXPECT_EQ(static_cast<unsigned char>(file[h + 3 + name_len]), 2);
}

TEST(Checkpoint, CorruptedMagicIsReported) {
  const auto dir = fixtures::temp_dir("ckpt-magic");
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(1, 8), 4), dir / "m.rscp");
  std::string file = slurp(dir / "m.rscp");
  file[0] = 'X';
  spit(dir / "bad.rscp", file);
  EXPECT_THROW(load_checkpoint(dir / "bad.rscp"), CheckpointMagicError);
  spit(dir / "tiny.rscp", "RS");
  EXPECT_THROW(load_checkpoint(dir / "tiny.rscp"), CheckpointMagicError);
}

TEST(Checkpoint, TruncatedFileIsReported) {
  const auto dir = fixtures::temp_dir("ckpt-trunc");
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(1, 8), 5), dir / "m.rscp");
  const std::string file = slurp(dir / "m.rscp");
  spit(dir / "cut.rscp", file.substr(0, file.size() - 3));
  EXPECT_THROW(load_checkpoint(dir / "cut.rscp"), CheckpointTruncatedError);
  spit(dir / "cut2.rscp", file.substr(0, 20));
  EXPECT_THROW(load_checkpoint(dir / "cut2.rscp"), CheckpointTruncatedError);
}

TEST(Checkpoint, MissingTensorIsAShapeErrorNamingIt) {
  const auto dir = fixtures::temp_dir("ckpt-count");
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(2, 8), 6), dir / "two.rscp");
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(1, 8), 7), dir / "one.rscp");
  const std::string two = slurp(dir / "two.rscp"), one = slurp(dir / "one.rscp");
  spit(dir / "mixed.rscp", two.substr(0, header_size(two)) + one.substr(header_size(one)));
  try {
    load_checkpoint(dir / "mixed.rscp");
    FAIL() << "expected CheckpointShapeError";
  } catch (const CheckpointShapeError& e) {
    EXPECT_EQ(e.tensor(), "layers.1.attn_norm");
    EXPECT_NE(std::string(e.what()).find("layers.1.attn_norm"), std::string::npos);
  }
}

TEST(Checkpoint, WrongShapeIsAShapeErrorNamingIt) {
  const auto dir = fixtures::temp_dir("ckpt-shape");
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(1, 8), 8), dir / "small.rscp");
  save_checkpoint(fixtures::random_model(fixtures::tiny_config(1, 16), 9), dir / "wide.rscp");
  const std::string small = slurp(dir / "small.rscp"), wide = slurp(dir / "wide.rscp");
  spit(dir / "mixed.rscp", small.substr(0, header_size(small)) + wide.substr(header_size(wide)));
  try {
    load_checkpoint(dir / "mixed.rscp");
    FAIL() << "expected CheckpointShapeError";
  } catch (const CheckpointShapeError& e) {
    EXPECT_EQ(e.tensor(), "embedding");
  }
}

TEST(Checkpoint, MissingFileIsAnError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/model.rscp"), Error);
}

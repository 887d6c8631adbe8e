// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (all integers little-endian):
//
//   "RSCP1"                       5-byte magic
//   u32 n, n bytes                config JSON (model config + tokenizer table)
//   repeated until end of file:
//     u16 n, n bytes              tensor name
//     u8                          dtype, 0 = f32
//     u8 rank, rank × u32         dims
//     prod(dims) × f32            row-major payload
//
// Tensors appear in ModelBundle::parameters() order.

#pragma once

#include <filesystem>
#include <string>

#include "residscope/model.hpp"

namespace residscope {

inline constexpr char kCheckpointMagic[] = "RSCP1";
inline constexpr unsigned char kDtypeF32 = 0;

std::string config_to_json(const ModelConfig& config, const Tokenizer& tokenizer);
// Parses the config JSON; throws CheckpointError on malformed documents.
std::pair<ModelConfig, Tokenizer> config_from_json(const std::string& json);

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path);
// Throws CheckpointMagicError, CheckpointTruncatedError or
// CheckpointShapeError (naming the offending tensor).
ModelBundle load_checkpoint(const std::filesystem::path& path);

// Weights rounded through f32, i.e. exactly what a save/load cycle yields.
ModelBundle quantize_f32(const ModelBundle& model);

}  // namespace residscope

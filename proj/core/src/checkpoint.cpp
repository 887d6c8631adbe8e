// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "json.hpp"
#include "residscope/errors.hpp"

namespace residscope {

using nlohmann::json;

std::string config_to_json(const ModelConfig& c, const Tokenizer& tokenizer) {
  json specials = json::array();
  for (auto s : Tokenizer::kSpecialNames) specials.push_back(std::string(s));
  json j = {
      {"config",
       {{"n_layers", c.n_layers},
        {"d_model", c.d_model},
        {"n_heads", c.n_heads},
        {"d_ff", c.d_ff},
        {"vocab_size", c.vocab_size},
        {"max_seq", c.max_seq},
        {"rope_theta", c.rope_theta},
        {"rms_eps", c.rms_eps}}},
      {"tokenizer", {{"chars", tokenizer.chars()}, {"specials", specials}}},
  };
  return j.dump();
}

std::pair<ModelConfig, Tokenizer> config_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.n_layers = c.at("n_layers").get<std::size_t>();
    cfg.d_model = c.at("d_model").get<std::size_t>();
    cfg.n_heads = c.at("n_heads").get<std::size_t>();
    cfg.d_ff = c.at("d_ff").get<std::size_t>();
    cfg.vocab_size = c.at("vocab_size").get<std::size_t>();
    cfg.max_seq = c.at("max_seq").get<std::size_t>();
    cfg.rope_theta = c.at("rope_theta").get<double>();
    cfg.rms_eps = c.at("rms_eps").get<double>();
    Tokenizer tok(j.at("tokenizer").at("chars").get<std::string>());
    return {cfg, tok};
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint config: ") + e.what());
  } catch (const TokenizerError& e) {
    throw CheckpointError(std::string("malformed tokenizer table: ") + e.what());
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  bool at_end() const { return pos_ == data_.size(); }

  template <typename T>
  T get(const char* what) {
    T v;
    need(sizeof(T), what);
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw CheckpointTruncatedError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path) {
  model.validate();
  std::string buf(kCheckpointMagic, 5);
  const std::string cfg = config_to_json(model.config, model.tokenizer);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.size()));
  buf += cfg;
  for (const auto& [name, t] : model.parameters()) {
    put<std::uint16_t>(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    put<std::uint8_t>(buf, kDtypeF32);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put<float>(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  std::string magic;
  try {
    magic = r.bytes(5, "magic");
  } catch (const CheckpointTruncatedError&) {
    throw CheckpointMagicError("not a residscope checkpoint (file too short for magic)");
  }
  if (magic != std::string(kCheckpointMagic, 5)) {
    throw CheckpointMagicError("not a residscope checkpoint (bad magic)");
  }
  const auto cfg_len = r.get<std::uint32_t>("config length");
  auto [config, tokenizer] = config_from_json(r.bytes(cfg_len, "config"));
  try {
    config.validate();
  } catch (const ContractError& e) {
    throw CheckpointError(std::string("invalid config in checkpoint: ") + e.what());
  }

  const auto expected = ModelBundle::expected_shapes(config);
  std::map<std::string, Shape> expected_by_name(expected.begin(), expected.end());
  std::map<std::string, Tensor> loaded;
  while (!r.at_end()) {
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    const std::string name = r.bytes(name_len, "tensor name");
    const auto dtype = r.get<std::uint8_t>("dtype");
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("dims");
    auto it = expected_by_name.find(name);
    if (it == expected_by_name.end()) {
      throw CheckpointShapeError(name, "unexpected tensor '" + name + "' for this config");
    }
    if (dtype != kDtypeF32) {
      throw CheckpointShapeError(name, "tensor '" + name + "' has unsupported dtype " +
                                           std::to_string(dtype));
    }
    if (shape != it->second) {
      throw CheckpointShapeError(name, "tensor '" + name + "' has shape " + shape_string(shape) +
                                           ", config requires " + shape_string(it->second));
    }
    if (loaded.count(name)) throw CheckpointShapeError(name, "duplicate tensor '" + name + "'");
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = static_cast<double>(r.get<float>(name.c_str()));
    loaded.emplace(name, Tensor(shape, std::move(values)));
  }

  std::vector<Tensor> params;
  for (const auto& [name, shape] : expected) {
    auto it = loaded.find(name);
    if (it == loaded.end()) {
      throw CheckpointShapeError(name, "checkpoint is missing tensor '" + name + "'");
    }
    params.push_back(it->second);
  }

  ModelBundle skeleton;
  skeleton.config = config;
  skeleton.tokenizer = tokenizer;
  skeleton.layers.resize(config.n_layers);
  return skeleton.with_parameters(params);
}

ModelBundle quantize_f32(const ModelBundle& model) {
  std::vector<Tensor> params;
  for (const auto& p : model.parameters()) {
    std::vector<double> v(p.tensor.data().begin(), p.tensor.data().end());
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
    params.emplace_back(p.tensor.shape(), std::move(v));
  }
  return model.with_parameters(params);
}

}  // namespace residscope

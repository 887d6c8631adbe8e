// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/run.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "json.hpp"
#include "residscope/checkpoint.hpp"
#include "residscope/errors.hpp"
#include "residscope/interventions.hpp"
#include "residscope/layer_map.hpp"
#include "residscope/rng.hpp"

namespace fs = std::filesystem;

namespace residscope {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPromptStream = 10;
constexpr std::uint64_t kCorpusStream = 11;
constexpr std::uint64_t kMapStream = 12;
constexpr std::uint64_t kDepthStream = 20;

// Reads fields off a JSON object and rejects any key that was never read.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw UsageError(where_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& into) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      into = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw UsageError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* object(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  template <typename E>
  void read_enum(const char* key, E& into, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    read(key, s);
    if (!j_.contains(key)) return;
    std::string valid;
    for (const auto& [n, v] : names) {
      if (s == n) {
        into = v;
        return;
      }
      valid += std::string(valid.empty() ? "" : ", ") + n;
    }
    throw UsageError(where_ + "." + key + ": unknown value '" + s + "' (valid: " + valid + ")");
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        std::string valid;
        for (const auto& s : seen_) valid += std::string(valid.empty() ? "" : ", ") + s;
        throw UsageError(where_ + ": unknown key '" + k + "' (valid: " + valid + ")");
      }
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json parse_config(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("configuration is not valid JSON: ") + e.what());
  }
}

const std::initializer_list<std::pair<const char*, TaskKind>> kTaskKinds = {
    {"copy", TaskKind::Copy},
    {"modular-chain", TaskKind::ModularChain},
    {"kv-multihop", TaskKind::KvMultihop}};

TaskSpec task_from(const json& j) {
  TaskSpec t;
  Fields f(j, "task");
  f.read_enum("kind", t.kind, kTaskKinds);
  f.read("hops", t.hops);
  f.read("min_hops", t.min_hops);
  f.read("modulus", t.modulus);
  f.read("n_entities", t.n_entities);
  f.read("copy_length", t.copy_length);
  f.read("seq_budget", t.seq_budget);
  f.finish();
  return t;
}

json task_json(const TaskSpec& t) {
  return {{"kind", task_kind_name(t.kind)}, {"hops", t.hops},
          {"min_hops", t.min_hops},         {"modulus", t.modulus},
          {"n_entities", t.n_entities},     {"copy_length", t.copy_length},
          {"seq_budget", t.seq_budget}};
}

template <typename E>
std::string enum_name(E v, std::initializer_list<std::pair<const char*, E>> names) {
  for (const auto& [n, e] : names)
    if (e == v) return n;
  return "unknown";
}

const std::initializer_list<std::pair<const char*, KlDirection>> kKlDirections = {
    {"final-to-lens", KlDirection::FinalToLens}, {"lens-to-final", KlDirection::LensToFinal}};
const std::initializer_list<std::pair<const char*, IGRule>> kIgRules = {
    {"right", IGRule::Right}, {"midpoint", IGRule::Midpoint}};
const std::initializer_list<std::pair<const char*, IGBaseline>> kIgBaselines = {
    {"mean", IGBaseline::MeanResidual}, {"zeros", IGBaseline::Zeros}};
const std::initializer_list<std::pair<const char*, LocalSubtrahend>> kSubtrahends = {
    {"contribution", LocalSubtrahend::Contribution}, {"residual", LocalSubtrahend::Residual}};
const std::initializer_list<std::pair<const char*, ErasureIndex>> kErasureIndices = {
    {"next-layer", ErasureIndex::NextLayer}, {"literal", ErasureIndex::Literal}};
const std::initializer_list<std::pair<const char*, DepthSource>> kDepthSources = {
    {"effects", DepthSource::Effects}, {"output", DepthSource::OutputChange}};

AnalysisOptions options_from(const json& j) {
  AnalysisOptions o;
  Fields f(j, "options");
  f.read("top_k", o.top_k);
  f.read_enum("kl_direction", o.kl_direction, kKlDirections);
  f.read("relative_lambda", o.relative_lambda);
  f.read("ig_steps", o.ig_steps);
  f.read_enum("ig_rule", o.ig_rule, kIgRules);
  f.read_enum("ig_baseline", o.ig_baseline, kIgBaselines);
  f.read("split_count", o.split_count);
  f.read_enum("local_subtrahend", o.local_subtrahend, kSubtrahends);
  f.read_enum("erasure_index", o.erasure_index, kErasureIndices);
  f.read("hops_min", o.hops_min);
  f.read("hops_max", o.hops_max);
  f.read("instances", o.instances);
  f.read("map_sequences", o.map_sequences);
  f.read_enum("depth_source", o.depth_source, kDepthSources);
  f.read("depth_prompts", o.depth_prompts);
  f.finish();
  return o;
}

json options_json(const AnalysisOptions& o) {
  return {{"top_k", o.top_k},
          {"kl_direction", enum_name(o.kl_direction, kKlDirections)},
          {"relative_lambda", o.relative_lambda},
          {"ig_steps", o.ig_steps},
          {"ig_rule", enum_name(o.ig_rule, kIgRules)},
          {"ig_baseline", enum_name(o.ig_baseline, kIgBaselines)},
          {"split_count", o.split_count},
          {"local_subtrahend", enum_name(o.local_subtrahend, kSubtrahends)},
          {"erasure_index", enum_name(o.erasure_index, kErasureIndices)},
          {"hops_min", o.hops_min},
          {"hops_max", o.hops_max},
          {"instances", o.instances},
          {"map_sequences", o.map_sequences},
          {"depth_source", enum_name(o.depth_source, kDepthSources)},
          {"depth_prompts", o.depth_prompts}};
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw Error(std::string(what) + " '" + path + "' does not exist");
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Collects files for one run directory, then writes the manifest last.
class RunWriter {
 public:
  RunWriter(const std::string& root, std::string kind, std::string canonical)
      : kind_(std::move(kind)), canonical_(std::move(canonical)) {
    id_ = run_id(kind_, canonical_);
    dir_ = fs::path(root) / id_;
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  void grid(const HeatmapGrid& g, const std::string& stem, const std::string& analysis) {
    emit_grid(g, dir_, stem);
    add(stem + ".json", kHeatmapSchema, analysis);
    add(stem + ".csv", "csv", analysis);
  }

  void series(const LayerSeries& s, const std::string& stem, const std::string& analysis) {
    emit_series(s, dir_, stem);
    add(stem + ".json", kSeriesSchema, analysis);
    add(stem + ".csv", "csv", analysis);
  }

  void file(const std::string& name, const std::string& contents, const std::string& schema,
            const std::string& analysis) {
    write_file(dir_ / name, contents);
    add(name, schema, analysis);
  }

  void add(const std::string& name, const std::string& schema, const std::string& analysis) {
    manifest_.files.push_back({name, schema, analysis});
  }

  RunResult finish() {
    manifest_.run_id = id_;
    manifest_.kind = kind_;
    manifest_.config = canonical_;
    write_file(dir_ / "manifest.json", manifest_to_json(manifest_));
    return {dir_, manifest_};
  }

 private:
  std::string kind_, canonical_, id_;
  fs::path dir_;
  Manifest manifest_;
};

void stamp(Meta& meta, const std::string& model, const std::string& corpus, std::uint64_t seed) {
  meta.model = model;
  meta.corpus = corpus;
  meta.seed = seed;
}

std::string corpus_id(const TaskSpec& t, std::size_t count, std::uint64_t seed) {
  return task_kind_name(t.kind) + ":hops=" + std::to_string(t.hops) +
         (t.min_hops ? ":min_hops=" + std::to_string(t.min_hops) : "") +
         ":n=" + std::to_string(count) + ":seed=" + std::to_string(seed);
}

std::string model_id(const std::string& path) { return fs::path(path).stem().string(); }

void require_fits(const ModelBundle& model, const TaskSpec& task) {
  if (task.seq_budget > model.config.max_seq) {
    throw Error("task seq_budget " + std::to_string(task.seq_budget) +
                " exceeds the model's max_seq " + std::to_string(model.config.max_seq));
  }
}

std::vector<ResidualTape> tapes_for(const ModelBundle& model,
                                    const std::vector<PromptExample>& prompts) {
  std::vector<ResidualTape> tapes;
  for (const auto& p : prompts) tapes.push_back(forward_with_tape(model, p.tokens));
  return tapes;
}

}  // namespace

void RunConfig::validate() const {
  if (std::find(kAnalyses.begin(), kAnalyses.end(), analysis) == kAnalyses.end()) {
    std::string valid;
    for (const auto& a : kAnalyses) valid += (valid.empty() ? "" : ", ") + a;
    throw UsageError("unknown analysis '" + analysis + "' (valid: " + valid + ")");
  }
  require_file(model, "model");
  if (analysis == "layer-map") require_file(model_b, "model_b");
  if (!mean.empty()) require_file(mean, "mean");
  if (prompts < 1) throw UsageError("prompts must be at least 1");
  if (mean_sequences < 1) throw UsageError("mean_sequences must be at least 1");
  if (options.top_k < 1) throw UsageError("options.top_k must be at least 1");
  if (options.ig_steps < 1) throw UsageError("options.ig_steps must be at least 1");
  if (options.split_count < 1) throw UsageError("options.split_count must be at least 1");
  if (options.hops_min < 1 || options.hops_max < options.hops_min) {
    throw UsageError("options.hops_min/hops_max must satisfy 1 <= hops_min <= hops_max");
  }
  if (options.instances < 1 || options.instances > prompts) {
    throw UsageError("options.instances must lie in [1, prompts]");
  }
  try {
    task.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_config(text);
  RunConfig c;
  Fields f(j, "config");
  f.read("analysis", c.analysis);
  f.read("model", c.model);
  f.read("model_b", c.model_b);
  f.read("mean", c.mean);
  if (const json* t = f.object("task")) c.task = task_from(*t);
  f.read("prompts", c.prompts);
  f.read("mean_sequences", c.mean_sequences);
  f.read("seed", c.seed);
  f.read("out", c.out);
  if (const json* o = f.object("options")) c.options = options_from(*o);
  f.finish();
  return c;
}

std::string canonical_json(const RunConfig& c) {
  const json j = {{"analysis", c.analysis},
                  {"model", c.model},
                  {"model_b", c.model_b},
                  {"mean", c.mean},
                  {"task", task_json(c.task)},
                  {"prompts", c.prompts},
                  {"mean_sequences", c.mean_sequences},
                  {"seed", c.seed},
                  {"options", options_json(c.options)}};
  return j.dump();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string run_id(std::string_view kind, std::string_view canonical) {
  return std::string(kind) + "-" + hex16(fnv1a64(canonical));
}

std::vector<std::vector<TokenId>> task_corpus(const TaskSpec& task, const Tokenizer& tokenizer,
                                              std::size_t count, std::uint64_t seed) {
  Rng rng = Rng(seed).fork(kCorpusStream);
  std::vector<std::vector<TokenId>> corpus;
  for (auto& ex : generate_examples(task, tokenizer, count, rng))
    corpus.push_back(std::move(ex.tokens));
  return corpus;
}

RunResult run_analysis(const RunConfig& c) {
  c.validate();
  const std::string canonical = canonical_json(c);
  const ModelBundle model = load_checkpoint(c.model);
  require_fits(model, c.task);
  const std::size_t L = model.config.n_layers;
  const auto& o = c.options;
  Rng prompt_rng = Rng(c.seed).fork(kPromptStream);
  const auto prompts = generate_examples(c.task, model.tokenizer, c.prompts, prompt_rng);
  const std::string mid = model_id(c.model);
  const std::string cid = corpus_id(c.task, c.prompts, c.seed);

  auto load_mean = [&] {
    if (!c.mean.empty()) return mean_residual_from_json(read_file(c.mean));
    const auto corpus = task_corpus(c.task, model.tokenizer, c.mean_sequences, c.seed);
    return compute_mean_residual(model, corpus);
  };

  RunWriter w(c.out, "analyze-" + c.analysis, canonical);
  auto emit_series_list = [&](std::vector<LayerSeries> list) {
    for (auto& s : list) {
      stamp(s.meta, mid, cid, c.seed);
      w.series(s, s.name, c.analysis);
    }
  };

  if (c.analysis == "norms") {
    const auto tapes = tapes_for(model, prompts);
    emit_series_list(residual_norms(tapes));
    emit_series_list(relative_contributions(tapes));
  } else if (c.analysis == "cossim") {
    const auto tapes = tapes_for(model, prompts);
    auto list = contribution_cossims(tapes);
    list.push_back(neighbor_cossim(tapes));
    emit_series_list(std::move(list));
  } else if (c.analysis == "skip" || c.analysis == "skip-future") {
    EffectOptions eo{c.analysis == "skip-future", o.split_count, c.seed};
    auto r = downstream_effect_matrix(model, prompts, eo);
    stamp(r.effects.meta, mid, cid, c.seed);
    w.grid(r.effects, r.effects.name, c.analysis);
    emit_series_list({r.output_change});
  } else if (c.analysis == "local") {
    for (bool future : {false, true}) {
      auto g = local_effect_matrix(model, prompts,
                                   {future, o.split_count, c.seed, o.local_subtrahend});
      stamp(g.meta, mid, cid, c.seed);
      w.grid(g, g.name, c.analysis);
    }
  } else if (c.analysis == "logitlens") {
    const auto tapes = tapes_for(model, prompts);
    auto r = logitlens_curves(model, tapes, {o.top_k, o.kl_direction});
    emit_series_list({r.kl, r.overlap});
  } else if (c.analysis == "erase") {
    const MeanResidual mean = load_mean();
    for (std::size_t i = 0; i < o.instances; ++i) {
      auto g = erasure_grid(model, prompts[i], mean, o.erasure_index);
      stamp(g.meta, mid, cid, c.seed);
      g.meta.flags["prompt"] = std::to_string(i);
      w.grid(g, "erasure_" + std::to_string(i), c.analysis);
    }
  } else if (c.analysis == "ig") {
    const MeanResidual mean = load_mean();
    const IGConfig ig{o.ig_steps, o.ig_baseline, o.ig_rule};
    for (std::size_t i = 0; i < o.instances; ++i) {
      const auto grid = ig_grid(model, prompts[i], &mean, ig);
      auto g = grid.to_heatmap(model.tokenizer, prompts[i].tokens);
      stamp(g.meta, mid, cid, c.seed);
      g.meta.flags["prompt"] = std::to_string(i);
      g.meta.flags["steps"] = std::to_string(o.ig_steps);
      g.meta.flags["display"] = "abs";
      w.grid(g, "ig_" + std::to_string(i), c.analysis);
    }
  } else if (c.analysis == "depth-score") {
    LayerSeries scores;
    scores.name = "depth_score";
    scores.axis = "hops";
    HeatmapGrid importance;
    importance.name = "depth_importance";
    importance.row_axis = "hops";
    importance.col_axis = "layer";
    importance.cols = layer_ticks(L, 1);
    for (std::size_t h = o.hops_min; h <= o.hops_max; ++h) {
      TaskSpec t = c.task;
      t.hops = h;
      t.min_hops = 0;
      Rng rng = Rng(c.seed).fork(kDepthStream + h);
      const auto ps = generate_examples(t, model.tokenizer, o.depth_prompts, rng);
      auto r = downstream_effect_matrix(model, ps, {true, o.split_count, c.seed});
      LayerSeries e;
      if (o.depth_source == DepthSource::Effects) {
        e = layer_importance_from_effects(r.effects);
      } else {
        e = r.output_change;
      }
      scores.ticks.push_back(std::to_string(h));
      importance.rows.push_back(std::to_string(h));
      for (const auto& v : e.values) importance.values.push_back(v);
      try {
        scores.values.emplace_back(depth_score(e));
      } catch (const UndefinedScoreError&) {
        scores.values.emplace_back(std::nullopt);
      }
    }
    scores.meta.reduction = "depth";
    scores.meta.flags["source"] = enum_name(o.depth_source, kDepthSources);
    importance.meta.reduction = "mean";
    importance.meta.flags = scores.meta.flags;
    const std::string dcid = task_kind_name(c.task.kind) + ":hops=" +
                             std::to_string(o.hops_min) + ".." + std::to_string(o.hops_max) +
                             ":n=" + std::to_string(o.depth_prompts) +
                             ":seed=" + std::to_string(c.seed);
    stamp(scores.meta, mid, dcid, c.seed);
    stamp(importance.meta, mid, dcid, c.seed);
    w.series(scores, scores.name, c.analysis);
    w.grid(importance, importance.name, c.analysis);
  } else if (c.analysis == "layer-map") {
    const ModelBundle target = load_checkpoint(c.model_b);
    require_fits(target, c.task);
    Rng rng = Rng(c.seed).fork(kMapStream);
    std::vector<std::vector<TokenId>> corpus;
    for (auto& ex : generate_examples(c.task, model.tokenizer, o.map_sequences, rng))
      corpus.push_back(std::move(ex.tokens));
    auto r = map_grid(model, target, corpus, {o.relative_lambda, c.seed});
    auto& g = r.rel_error;
    try {
      g.meta.flags["diagonality"] = number(diagonality(g));
    } catch (const UndefinedScoreError&) {
      g.meta.flags["diagonality"] = "undefined";
    }
    g.meta.flags["relative_lambda"] = number(o.relative_lambda);
    stamp(g.meta, mid + "->" + model_id(c.model_b),
          corpus_id(c.task, o.map_sequences, c.seed), c.seed);
    w.grid(g, g.name, c.analysis);
  }
  return w.finish();
}

TrainToyConfig train_toy_config_from_json(const std::string& text) {
  const json j = parse_config(text);
  TrainToyConfig c;
  Fields f(j, "config");
  if (const json* m = f.object("model")) {
    Fields g(*m, "model");
    g.read("n_layers", c.model.n_layers);
    g.read("d_model", c.model.d_model);
    g.read("n_heads", c.model.n_heads);
    g.read("d_ff", c.model.d_ff);
    g.read("max_seq", c.model.max_seq);
    g.read("rope_theta", c.model.rope_theta);
    g.read("rms_eps", c.model.rms_eps);
    g.finish();
  }
  if (const json* t = f.object("task")) c.task = task_from(*t);
  if (const json* t = f.object("train")) {
    Fields g(*t, "train");
    g.read("steps", c.train.steps);
    g.read("batch", c.train.batch);
    g.read("lr", c.train.lr);
    g.read("warmup", c.train.warmup);
    g.read("seed", c.train.seed);
    g.read("mask_question", c.train.mask_question);
    g.read("weight_decay", c.train.weight_decay);
    g.read("beta1", c.train.beta1);
    g.read("beta2", c.train.beta2);
    g.read("adam_eps", c.train.adam_eps);
    g.read("grad_clip", c.train.grad_clip);
    g.finish();
  }
  f.read("eval_examples", c.eval_examples);
  f.read("out", c.out);
  f.finish();
  return c;
}

std::string canonical_json(const TrainToyConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  const json j = {{"model",
                   {{"n_layers", m.n_layers},
                    {"d_model", m.d_model},
                    {"n_heads", m.n_heads},
                    {"d_ff", m.d_ff},
                    {"max_seq", m.max_seq},
                    {"rope_theta", m.rope_theta},
                    {"rms_eps", m.rms_eps}}},
                  {"task", task_json(c.task)},
                  {"train",
                   {{"steps", t.steps},
                    {"batch", t.batch},
                    {"lr", t.lr},
                    {"warmup", t.warmup},
                    {"seed", t.seed},
                    {"mask_question", t.mask_question},
                    {"weight_decay", t.weight_decay},
                    {"beta1", t.beta1},
                    {"beta2", t.beta2},
                    {"adam_eps", t.adam_eps},
                    {"grad_clip", t.grad_clip}}},
                  {"eval_examples", c.eval_examples}};
  return j.dump();
}

RunResult run_train_toy(const TrainToyConfig& c) {
  try {
    c.task.validate();
    c.train.validate();
    ModelConfig probe = c.model;
    probe.vocab_size = Tokenizer::standard().vocab_size();
    probe.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  RunWriter w(c.out, "train-toy", canonical_json(c));
  auto result = train(c.model, c.task, c.train);
  const ModelBundle model = quantize_f32(result.model);
  save_checkpoint(model, w.dir() / "model.rscp");
  w.add("model.rscp", "checkpoint", "train-toy");
  w.file("loss.csv", loss_curve_to_csv(result.curve), "csv", "train-toy");
  if (c.eval_examples > 0) {
    const auto acc = eval_answer_accuracy(model, c.task, c.eval_examples, c.train.seed);
    const json j = {{"schema", "accuracy/v1"},
                    {"exact", acc.exact},
                    {"token", acc.token},
                    {"examples", acc.examples}};
    w.file("accuracy.json", j.dump(2) + "\n", "accuracy/v1", "train-toy");
  }
  return w.finish();
}

MeanResidualConfig mean_residual_config_from_json(const std::string& text) {
  const json j = parse_config(text);
  MeanResidualConfig c;
  Fields f(j, "config");
  f.read("model", c.model);
  if (const json* t = f.object("task")) c.task = task_from(*t);
  f.read("sequences", c.sequences);
  f.read("seed", c.seed);
  f.read("out", c.out);
  f.finish();
  return c;
}

std::string canonical_json(const MeanResidualConfig& c) {
  const json j = {{"model", c.model},
                  {"task", task_json(c.task)},
                  {"sequences", c.sequences},
                  {"seed", c.seed}};
  return j.dump();
}

RunResult run_mean_residual(const MeanResidualConfig& c) {
  require_file(c.model, "model");
  if (c.sequences < 1) throw UsageError("sequences must be at least 1");
  const ModelBundle model = load_checkpoint(c.model);
  require_fits(model, c.task);
  const auto corpus = task_corpus(c.task, model.tokenizer, c.sequences, c.seed);
  RunWriter w(c.out, "mean-residual", canonical_json(c));
  w.file("mean.json", mean_residual_to_json(compute_mean_residual(model, corpus)),
         kMeanResidualSchema, "mean-residual");
  return w.finish();
}

RenderReport render_manifest(const fs::path& manifest_path, const RenderOptions& options) {
  const Manifest manifest = manifest_from_json(read_file(manifest_path));
  const fs::path base = manifest_path.parent_path();
  const fs::path jobs_dir = options.jobs_dir.empty() ? base / "figures" : options.jobs_dir;
  RenderReport report;
  for (const auto& entry : manifest.files) {
    if (entry.schema != kHeatmapSchema && entry.schema != kSeriesSchema) continue;
    const fs::path input = base / entry.path;
    std::string kind, title, caption;
    try {
      const std::string text = read_file(input);
      if (entry.schema == kHeatmapSchema) {
        const auto g = grid_from_json(text);
        kind = "heatmap";
        title = g.name;
        caption = "model=" + g.meta.model + " seed=" + std::to_string(g.meta.seed);
      } else {
        const auto s = series_from_json(text);
        kind = s.axis == "hops" ? "bars" : "line";
        title = s.name;
        caption = "model=" + s.meta.model + " seed=" + std::to_string(s.meta.seed);
      }
    } catch (const std::exception& e) {
      report.errors.push_back(entry.path + ": " + e.what());
      continue;
    }
    const std::string stem = fs::path(entry.path).stem().string();
    const json job = {{"schema", kFigureJobSchema},
                      {"inputs", {fs::absolute(input).lexically_normal().string()}},
                      {"kind", kind},
                      {"output", fs::absolute(jobs_dir / (stem + "." + options.format))
                                     .lexically_normal()
                                     .string()},
                      {"title", title},
                      {"caption", caption}};
    const fs::path job_path = jobs_dir / (stem + ".job.json");
    write_file(job_path, job.dump(2) + "\n");
    report.jobs.push_back(job_path);
    if (!options.renderer.empty()) {
      const std::string cmd = options.renderer + " '" + job_path.string() + "'";
      if (std::system(cmd.c_str()) != 0) report.errors.push_back(entry.path + ": renderer failed");
    }
  }
  return report;
}

}  // namespace residscope

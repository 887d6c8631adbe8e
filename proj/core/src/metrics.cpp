// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "residscope/errors.hpp"
#include "residscope/parallel.hpp"
#include "residscope/rng.hpp"

namespace residscope {

void HeatmapGrid::validate() const {
  if (values.size() != rows.size() * cols.size()) {
    throw ContractError("grid '" + name + "': " + std::to_string(values.size()) +
                        " values for " + std::to_string(rows.size()) + "x" +
                        std::to_string(cols.size()) + " ticks");
  }
  for (const auto& v : values) {
    if (v && !std::isfinite(*v)) throw ContractError("grid '" + name + "' has a non-finite entry");
  }
}

double l2_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double cossim(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("cossim: length mismatch");
  double dot = 0.0, nx = 0.0, ny = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  const double c = dot / (std::sqrt(nx) * std::sqrt(ny));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<std::string> layer_ticks(std::size_t n, std::size_t first) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(std::to_string(first + i));
  return t;
}

namespace {

// Mean of samples per layer, skipping excluded (zero-denominator) tokens.
struct MeanAccumulator {
  explicit MeanAccumulator(std::size_t n) : sum(n, 0.0), count(n, 0) {}
  std::vector<double> sum;
  std::vector<std::size_t> count;
  std::size_t excluded = 0;

  void add(std::size_t i, double v) {
    sum[i] += v;
    ++count[i];
  }

  LayerSeries finish(std::string name, std::size_t first_tick = 0) const {
    LayerSeries s;
    s.name = std::move(name);
    s.ticks = layer_ticks(sum.size(), first_tick);
    s.meta.reduction = "mean";
    s.excluded = excluded;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (count[i]) {
        s.values.emplace_back(sum[i] / static_cast<double>(count[i]));
      } else {
        s.values.emplace_back(std::nullopt);
      }
    }
    return s;
  }
};

std::size_t common_layers(std::span<const ResidualTape> tapes) {
  if (tapes.empty()) throw ContractError("metrics: no tapes given");
  const std::size_t L = tapes.front().n_layers();
  for (const auto& t : tapes) {
    if (t.n_layers() != L) throw DimensionError("metrics: tapes disagree on layer count");
  }
  return L;
}

std::vector<double> row_sum(std::span<const double> a, std::span<const double> b) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

void ratio_sample(MeanAccumulator& acc, std::size_t layer, double num, double den) {
  if (den < kZeroNorm) {
    ++acc.excluded;
    return;
  }
  acc.add(layer, num / den);
}

void cos_sample(MeanAccumulator& acc, std::size_t layer, std::span<const double> x,
                std::span<const double> y) {
  if (l2_norm(x) < kZeroNorm || l2_norm(y) < kZeroNorm) {
    ++acc.excluded;
    return;
  }
  acc.add(layer, cossim(x, y));
}

}  // namespace

std::vector<LayerSeries> relative_contributions(std::span<const ResidualTape> tapes) {
  const std::size_t L = common_layers(tapes);
  MeanAccumulator layer(L), attn(L), mlp(L);
  for (const auto& tape : tapes) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t t = 0; t < tape.length(); ++t) {
        const auto h = tape.residuals[l].row(t);
        const auto a = tape.attn[l].row(t);
        const auto m = tape.mlp[l].row(t);
        const double nh = l2_norm(h);
        ratio_sample(layer, l, l2_norm(row_sum(a, m)), nh);
        ratio_sample(attn, l, l2_norm(a), nh);
        ratio_sample(mlp, l, l2_norm(m), l2_norm(row_sum(h, a)));
      }
    }
  }
  return {layer.finish("rel_layer"), attn.finish("rel_attn"), mlp.finish("rel_mlp")};
}

std::vector<LayerSeries> contribution_cossims(std::span<const ResidualTape> tapes) {
  const std::size_t L = common_layers(tapes);
  MeanAccumulator layer(L), attn(L), mlp(L);
  for (const auto& tape : tapes) {
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t t = 0; t < tape.length(); ++t) {
        const auto h = tape.residuals[l].row(t);
        const auto a = tape.attn[l].row(t);
        const auto m = tape.mlp[l].row(t);
        cos_sample(layer, l, row_sum(a, m), h);
        cos_sample(attn, l, a, h);
        cos_sample(mlp, l, m, row_sum(h, a));
      }
    }
  }
  return {layer.finish("cossim_layer"), attn.finish("cossim_attn"), mlp.finish("cossim_mlp")};
}

LayerSeries neighbor_cossim(std::span<const ResidualTape> tapes) {
  const std::size_t L = common_layers(tapes);
  MeanAccumulator acc(L);
  for (const auto& tape : tapes)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t t = 0; t < tape.length(); ++t)
        cos_sample(acc, l, tape.residuals[l].row(t), tape.residuals[l + 1].row(t));
  return acc.finish("cossim_neighbor");
}

std::vector<LayerSeries> residual_norms(std::span<const ResidualTape> tapes) {
  const std::size_t L = common_layers(tapes);
  MeanAccumulator h(L + 1), a(L), m(L);
  for (const auto& tape : tapes) {
    for (std::size_t t = 0; t < tape.length(); ++t) {
      for (std::size_t l = 0; l <= L; ++l) h.add(l, l2_norm(tape.residuals[l].row(t)));
      for (std::size_t l = 0; l < L; ++l) {
        a.add(l, l2_norm(tape.attn[l].row(t)));
        m.add(l, l2_norm(tape.mlp[l].row(t)));
      }
    }
  }
  return {h.finish("norm_residual"), a.finish("norm_attn"), m.finish("norm_mlp")};
}

double output_change(const ResidualTape& clean, const ResidualTape& intervened,
                     std::span<const std::size_t> positions) {
  if (clean.probs.shape() != intervened.probs.shape()) {
    throw DimensionError("output_change: tapes differ in shape " +
                         shape_string(clean.probs.shape()) + " vs " +
                         shape_string(intervened.probs.shape()));
  }
  const std::size_t T = clean.probs.rows();
  double best = 0.0;
  for (auto t : positions) {
    if (t >= T) throw ContractError("output_change: position " + std::to_string(t) + " out of range");
    const auto y = clean.probs.row(t);
    const auto yb = intervened.probs.row(t);
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += (y[j] - yb[j]) * (y[j] - yb[j]);
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

std::vector<std::size_t> split_candidates(const PromptExample& prompt) {
  const std::size_t T = prompt.tokens.size();
  std::vector<std::size_t> out;
  for (std::size_t p = prompt.answer_span.begin; p < prompt.answer_span.end; ++p)
    if (p > 1 && p + 1 < T) out.push_back(p);
  if (out.empty())
    for (std::size_t p = 2; p + 1 < T; ++p) out.push_back(p);
  return out;
}

std::vector<std::size_t> sample_splits(const PromptExample& prompt, std::size_t count, Rng& rng) {
  auto cand = split_candidates(prompt);
  if (cand.size() <= count) return cand;
  // Partial Fisher-Yates, then restore ascending order.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(cand.size() - i));
    std::swap(cand[i], cand[j]);
  }
  cand.resize(count);
  std::sort(cand.begin(), cand.end());
  return cand;
}

namespace {

struct EffectPartial {
  std::vector<std::optional<double>> cells;  // L×L
  std::vector<double> out_change;            // L
  std::size_t excluded = 0;
};

void fold_max(std::optional<double>& cell, double v) {
  if (!cell || v > *cell) cell = v;
}

// Relative change of one layer's contribution at the given positions.
void contribution_change(const Tensor& clean_c, const Tensor& new_c, std::size_t from_pos,
                         std::optional<double>& cell, std::size_t& excluded) {
  const std::size_t T = clean_c.rows(), d = clean_c.cols();
  for (std::size_t t = from_pos; t < T; ++t) {
    const auto c = clean_c.row(t);
    const auto cb = new_c.row(t);
    const double den = l2_norm(c);
    if (den < kZeroNorm) {
      ++excluded;
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (c[j] - cb[j]) * (c[j] - cb[j]);
    fold_max(cell, std::clamp(std::sqrt(s) / den, 0.0, 1.0));
  }
}

HeatmapGrid effect_grid(std::string name, std::size_t L) {
  HeatmapGrid g;
  g.name = std::move(name);
  g.row_axis = "skipped layer";
  g.col_axis = "affected layer";
  g.rows = layer_ticks(L);
  g.cols = layer_ticks(L);
  g.values.assign(L * L, std::nullopt);
  g.meta.reduction = "max";
  return g;
}

std::vector<EffectPartial> merge_into(HeatmapGrid& grid, std::vector<EffectPartial> parts,
                                      std::size_t L, std::size_t& excluded) {
  for (const auto& p : parts) {
    excluded += p.excluded;
    for (std::size_t s = 0; s < L; ++s)
      for (std::size_t l = s + 1; l < L; ++l)
        if (p.cells[s * L + l]) fold_max(grid.at(s, l), *p.cells[s * L + l]);
  }
  return parts;
}

}  // namespace

EffectResult downstream_effect_matrix(const ModelBundle& model,
                                      std::span<const PromptExample> prompts,
                                      const EffectOptions& options) {
  if (prompts.empty()) throw ContractError("effect matrix: empty prompt set");
  const std::size_t L = model.config.n_layers;
  auto parts = parallel_map<EffectPartial>(prompts.size(), [&](std::size_t pi) {
    const auto& prompt = prompts[pi];
    const auto clean = forward_with_tape(model, prompt.tokens);
    const std::size_t T = clean.length();
    EffectPartial part{std::vector<std::optional<double>>(L * L), std::vector<double>(L, 0.0), 0};
    std::vector<std::size_t> splits;
    if (options.restrict_to_future) {
      Rng rng = Rng(options.seed).fork(pi);
      splits = sample_splits(prompt, options.split_count, rng);
    }
    for (std::size_t s = 0; s < L; ++s) {
      auto measure = [&](const ResidualTape& bar, std::size_t from_pos) {
        for (std::size_t l = s + 1; l < L; ++l) {
          const Tensor c = sub(clean.residuals[l + 1], clean.residuals[l]);
          const Tensor cb = sub(bar.residuals[l + 1], bar.residuals[l]);
          contribution_change(c, cb, from_pos, part.cells[s * L + l], part.excluded);
        }
        std::vector<std::size_t> pos;
        for (std::size_t t = from_pos; t < T; ++t) pos.push_back(t);
        part.out_change[s] = std::max(part.out_change[s], output_change(clean, bar, pos));
      };
      if (!options.restrict_to_future) {
        measure(run_with_skip(model, prompt.tokens, s), 0);
      } else {
        for (auto ts : splits) measure(run_with_skip_upto(model, prompt.tokens, s, ts), ts + 1);
      }
    }
    return part;
  });

  EffectResult result;
  result.effects = effect_grid(options.restrict_to_future ? "skip_effect_future" : "skip_effect", L);
  parts = merge_into(result.effects, std::move(parts), L, result.excluded);
  result.output_change.name =
      options.restrict_to_future ? "skip_output_change_future" : "skip_output_change";
  result.output_change.ticks = layer_ticks(L);
  result.output_change.meta.reduction = "max";
  std::vector<double> oc(L, 0.0);
  for (const auto& p : parts)
    for (std::size_t s = 0; s < L; ++s) oc[s] = std::max(oc[s], p.out_change[s]);
  for (double v : oc) result.output_change.values.emplace_back(v);
  for (auto* meta : {&result.effects.meta, &result.output_change.meta}) {
    meta->flags["restrict_to_future"] = options.restrict_to_future ? "true" : "false";
    meta->flags["split_count"] = std::to_string(options.split_count);
    meta->flags["excluded"] = std::to_string(result.excluded);
    meta->flags["prompts"] = std::to_string(prompts.size());
  }
  return result;
}

HeatmapGrid local_effect_matrix(const ModelBundle& model, std::span<const PromptExample> prompts,
                                const LocalEffectOptions& options) {
  if (prompts.empty()) throw ContractError("local effect matrix: empty prompt set");
  const std::size_t L = model.config.n_layers;
  auto parts = parallel_map<EffectPartial>(prompts.size(), [&](std::size_t pi) {
    const auto& prompt = prompts[pi];
    const auto clean = forward_with_tape(model, prompt.tokens);
    EffectPartial part{std::vector<std::optional<double>>(L * L), {}, 0};
    std::vector<std::optional<std::size_t>> splits;
    if (options.restrict_to_future) {
      Rng rng = Rng(options.seed).fork(pi);
      for (auto ts : sample_splits(prompt, options.split_count, rng)) splits.emplace_back(ts);
    } else {
      splits.emplace_back(std::nullopt);
    }
    for (std::size_t s = 0; s < L; ++s) {
      for (const auto& ts : splits) {
        const auto removal =
            run_with_local_removal(model, clean, s, LocalRemovalOptions{options.subtrahend, ts});
        for (const auto& pair : removal.pairs) {
          const Tensor c = add(pair.clean_attn, pair.clean_mlp);
          const Tensor cb = add(pair.attn, pair.mlp);
          contribution_change(c, cb, ts ? *ts + 1 : 0, part.cells[s * L + pair.layer],
                              part.excluded);
        }
      }
    }
    return part;
  });
  HeatmapGrid grid =
      effect_grid(options.restrict_to_future ? "local_effect_future" : "local_effect", L);
  grid.row_axis = "removed layer";
  std::size_t excluded = 0;
  merge_into(grid, std::move(parts), L, excluded);
  grid.meta.flags["restrict_to_future"] = options.restrict_to_future ? "true" : "false";
  grid.meta.flags["split_count"] = std::to_string(options.split_count);
  grid.meta.flags["subtrahend"] =
      options.subtrahend == LocalSubtrahend::Contribution ? "contribution" : "residual";
  grid.meta.flags["excluded"] = std::to_string(excluded);
  grid.meta.flags["prompts"] = std::to_string(prompts.size());
  return grid;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

std::vector<std::size_t> top_k_indices(std::span<const double> p, std::size_t k) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  idx.resize(k);
  return idx;
}

namespace {

std::vector<double> log_softmax_rows(const Tensor& logits) {
  const std::size_t r = logits.rows(), c = logits.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  return out;
}

}  // namespace

LogitLensResult logitlens_curves(const ModelBundle& model, std::span<const ResidualTape> tapes,
                                 const LogitLensOptions& options) {
  const std::size_t L = common_layers(tapes);
  const std::size_t V = model.config.vocab_size;
  if (options.top_k == 0) throw ContractError("logit lens: top_k must be positive");
  MeanAccumulator kl(L + 1), overlap(L + 1);
  std::vector<double> kl_max(L + 1, 0.0);
  for (const auto& tape : tapes) {
    const auto final_lp = log_softmax_rows(output_logits(model, tape.residuals[L]));
    for (std::size_t l = 0; l <= L; ++l) {
      const auto lens_lp = log_softmax_rows(output_logits(model, tape.residuals[l]));
      for (std::size_t t = 0; t < tape.length(); ++t) {
        const double* f = final_lp.data() + t * V;
        const double* g = lens_lp.data() + t * V;
        const double* ref = options.direction == KlDirection::FinalToLens ? f : g;
        const double* other = options.direction == KlDirection::FinalToLens ? g : f;
        double d = 0.0;
        for (std::size_t j = 0; j < V; ++j) {
          const double pr = std::exp(ref[j]);
          if (pr > 0.0) d += pr * (ref[j] - other[j]);
        }
        d = std::max(d, 0.0);
        kl.add(l, d);
        kl_max[l] = std::max(kl_max[l], d);
        const auto top_f = top_k_indices({f, V}, options.top_k);
        const auto top_g = top_k_indices({g, V}, options.top_k);
        std::size_t shared = 0;
        for (auto i : top_g) shared += std::count(top_f.begin(), top_f.end(), i);
        overlap.add(l, static_cast<double>(shared) / static_cast<double>(top_f.size()));
      }
    }
  }
  LogitLensResult r{kl.finish("logitlens_kl"), overlap.finish("logitlens_top" +
                                                              std::to_string(options.top_k))};
  for (std::size_t l = 0; l <= L; ++l) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", kl_max[l]);
    r.kl.meta.flags["max_" + std::to_string(l)] = buf;
  }
  const std::string dir =
      options.direction == KlDirection::FinalToLens ? "final||lens" : "lens||final";
  r.kl.meta.flags["direction"] = dir;
  r.overlap.meta.flags["top_k"] = std::to_string(options.top_k);
  return r;
}

std::vector<std::size_t> answer_prediction_positions(const PromptExample& prompt) {
  std::vector<std::size_t> out;
  for (std::size_t p = prompt.answer_span.begin; p < prompt.answer_span.end; ++p)
    if (p > 0) out.push_back(p - 1);
  return out;
}

HeatmapGrid erasure_grid(const ModelBundle& model, const PromptExample& prompt,
                         const MeanResidual& mean, ErasureIndex index) {
  const std::size_t L = model.config.n_layers, T = prompt.tokens.size();
  const auto clean = forward_with_tape(model, prompt.tokens);
  const auto positions = answer_prediction_positions(prompt);
  if (positions.empty()) throw ContractError("erasure grid: prompt has no answer predictions");
  HeatmapGrid g;
  g.name = "erasure";
  g.row_axis = "layer";
  g.col_axis = "token";
  g.rows = layer_ticks(L);
  for (std::size_t t = 0; t < T; ++t) g.cols.push_back(model.tokenizer.token_text(prompt.tokens[t]));
  g.values.assign(L * T, std::nullopt);
  auto cells = parallel_map<double>(L * T, [&](std::size_t i) {
    const auto bar = run_with_erasure(model, prompt.tokens, i / T, i % T, mean, index);
    return output_change(clean, bar, positions);
  });
  for (std::size_t i = 0; i < L * T; ++i) g.values[i] = cells[i];
  g.meta.reduction = "max";
  g.meta.flags["index"] = index == ErasureIndex::NextLayer ? "next-layer" : "literal";
  g.meta.flags["answer_begin"] = std::to_string(prompt.answer_span.begin);
  g.meta.flags["answer_end"] = std::to_string(prompt.answer_span.end);
  return g;
}

LayerSeries layer_importance_from_effects(const HeatmapGrid& effects,
                                          std::optional<double> last_layer_value) {
  effects.validate();
  const std::size_t L = effects.n_rows();
  if (L == 0 || effects.n_cols() != L) {
    throw ContractError("layer importance: effect grid must be square and nonempty");
  }
  LayerSeries e;
  e.name = "importance";
  e.ticks = layer_ticks(L);
  e.meta = effects.meta;
  e.meta.reduction = "mean";
  for (std::size_t s = 0; s < L; ++s) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t l = s + 1; l < L; ++l) {
      if (const auto& v = effects.at(s, l)) {
        acc += *v;
        ++n;
      }
    }
    if (s + 1 == L) {
      e.values.emplace_back(last_layer_value.value_or(0.0));
    } else {
      e.values.emplace_back(n ? acc / static_cast<double>(n) : 0.0);
    }
  }
  return e;
}

double depth_score(std::span<const double> e) {
  if (e.empty()) throw UndefinedScoreError("depth score of an empty importance vector");
  double den = 0.0;
  for (double v : e) {
    if (!(v >= 0.0)) throw ContractError("depth score: importance must be nonnegative");
    den += v;
  }
  if (den == 0.0) throw UndefinedScoreError("depth score undefined for all-zero importance");
  // Normalizing first makes a single nonzero entry give its index exactly.
  double d = 0.0;
  for (std::size_t l = 0; l < e.size(); ++l) d += static_cast<double>(l + 1) * (e[l] / den);
  return d;
}

double depth_score(const LayerSeries& importance) {
  std::vector<double> e;
  for (const auto& v : importance.values) e.push_back(v.value_or(0.0));
  return depth_score(e);
}

}  // namespace residscope

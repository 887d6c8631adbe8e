// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/interventions.hpp"

#include <algorithm>
#include <sstream>

#include "residscope/errors.hpp"

namespace residscope {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_layer(std::size_t layer, std::size_t n_layers, const char* what) {
  if (layer >= n_layers) {
    throw ContractError(std::string(what) + ": layer " + std::to_string(layer) +
                        " out of range for " + std::to_string(n_layers) + " layers");
  }
}

// Rows [0, count) taken from `source`, the rest from `base`.
Tensor splice_prefix(const Tensor& base, const Tensor& source, std::size_t count) {
  const std::size_t d = base.cols();
  std::vector<double> v(base.data().begin(), base.data().end());
  count = std::min(count, base.rows());
  std::copy_n(source.data().begin(), count * d, v.begin());
  return Tensor(base.shape(), std::move(v));
}

Tensor with_row(const Tensor& base, std::size_t row, std::span<const double> values) {
  const std::size_t d = base.cols();
  std::vector<double> v(base.data().begin(), base.data().end());
  std::copy(values.begin(), values.end(), v.begin() + static_cast<std::ptrdiff_t>(row * d));
  return Tensor(base.shape(), std::move(v));
}

}  // namespace

void InterventionSpec::validate(std::size_t n_layers, std::size_t seq_len) const {
  std::visit(overloaded{
                 [&](const SkipLayer& s) { require_layer(s.layer, n_layers, "skip"); },
                 [&](const SkipLayerUpToPosition& s) {
                   require_layer(s.layer, n_layers, "skip-upto");
                   if (!(s.until > 1 && s.until + 1 < seq_len)) {
                     throw ContractError("skip-upto: split position " + std::to_string(s.until) +
                                         " must satisfy 1 < t_s < T-1 for T=" +
                                         std::to_string(seq_len));
                   }
                 },
                 [&](const RemoveContributionLocal& s) {
                   require_layer(s.layer, n_layers, "local removal");
                 },
                 [&](const EraseResidual& s) {
                   require_layer(s.layer, n_layers, "erasure");
                   if (s.position >= seq_len) {
                     throw ContractError("erasure: position " + std::to_string(s.position) +
                                         " out of range for T=" + std::to_string(seq_len));
                   }
                 },
             },
             kind);
}

std::string InterventionSpec::describe() const {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const SkipLayer& s) { os << "skip(" << s.layer << ")"; },
                 [&](const SkipLayerUpToPosition& s) {
                   os << "skip-upto(" << s.layer << "," << s.until << ")";
                 },
                 [&](const RemoveContributionLocal& s) { os << "local(" << s.layer << ")"; },
                 [&](const EraseResidual& s) {
                   os << "erase(" << s.layer << "," << s.position << ")";
                 },
             },
             kind);
  return os.str();
}

MeanResidual compute_mean_residual(const ModelBundle& model,
                                   std::span<const std::vector<TokenId>> corpus) {
  if (corpus.empty()) throw ContractError("mean residual: empty corpus");
  const std::size_t L = model.config.n_layers, d = model.config.d_model;
  MeanResidual mean;
  mean.layers.assign(L + 1, std::vector<double>(d, 0.0));
  for (const auto& seq : corpus) {
    const auto tape = forward_with_tape(model, seq);
    for (std::size_t l = 0; l <= L; ++l) {
      const auto& h = tape.residuals[l];
      for (std::size_t t = 0; t < h.rows(); ++t) {
        const auto row = h.row(t);
        for (std::size_t j = 0; j < d; ++j) mean.layers[l][j] += row[j];
      }
    }
    mean.sample_count += seq.size();
  }
  const double n = static_cast<double>(mean.sample_count);
  for (auto& layer : mean.layers)
    for (auto& v : layer) v /= n;
  return mean;
}

ResidualTape run_with_skip(const ModelBundle& model, std::span<const TokenId> tokens,
                           std::size_t layer) {
  require_layer(layer, model.config.n_layers, "skip");
  return forward_with_tape(model, tokens,
                           [layer](std::size_t l, const Tensor& input, LayerOutput& out) {
                             if (l != layer) return;
                             out.attn = Tensor::zeros(out.attn.shape());
                             out.mlp = Tensor::zeros(out.mlp.shape());
                             out.next = input;
                           });
}

ResidualTape run_with_skip_upto(const ModelBundle& model, std::span<const TokenId> tokens,
                                std::size_t layer, std::size_t until) {
  InterventionSpec{SkipLayerUpToPosition{layer, until}}.validate(model.config.n_layers,
                                                                 tokens.size());
  return forward_with_tape(
      model, tokens, [layer, until](std::size_t l, const Tensor& input, LayerOutput& out) {
        if (l != layer) return;
        const Tensor zeros = Tensor::zeros(out.attn.shape());
        out.attn = splice_prefix(out.attn, zeros, until + 1);
        out.mlp = splice_prefix(out.mlp, zeros, until + 1);
        out.next = splice_prefix(out.next, input, until + 1);
      });
}

ResidualTape run_with_erasure(const ModelBundle& model, std::span<const TokenId> tokens,
                              std::size_t layer, std::size_t position, const MeanResidual& mean,
                              ErasureIndex index) {
  InterventionSpec{EraseResidual{layer, position}}.validate(model.config.n_layers, tokens.size());
  if (mean.n_layers() != model.config.n_layers || mean.width() != model.config.d_model) {
    throw DimensionError("erasure: mean residual has " + std::to_string(mean.n_layers()) +
                         " layers of width " + std::to_string(mean.width()) + ", model has " +
                         std::to_string(model.config.n_layers) + " of width " +
                         std::to_string(model.config.d_model));
  }
  const auto& replacement =
      index == ErasureIndex::NextLayer ? mean.layers[layer + 1] : mean.layers[layer];
  return forward_with_tape(model, tokens,
                           [&](std::size_t l, const Tensor&, LayerOutput& out) {
                             if (l != layer) return;
                             out.next = with_row(out.next, position, replacement);
                           });
}

LocalRemoval run_with_local_removal(const ModelBundle& model, const ResidualTape& clean,
                                    std::size_t layer, const LocalRemovalOptions& options) {
  const std::size_t L = model.config.n_layers;
  require_layer(layer, L, "local removal");
  if (clean.n_layers() != L) throw DimensionError("local removal: tape/model layer count differ");
  const std::size_t T = clean.length();
  Tensor subtrahend = options.subtrahend == LocalSubtrahend::Contribution
                          ? add(clean.attn[layer], clean.mlp[layer])
                          : clean.residuals[layer];
  if (options.until) {
    subtrahend = splice_prefix(Tensor::zeros(subtrahend.shape()), subtrahend, *options.until + 1);
  }
  LocalRemoval result{layer, {}};
  for (std::size_t l = layer + 1; l < L; ++l) {
    const Tensor input = sub(clean.residuals[l], subtrahend);
    LayerOutput out = apply_layer(model, l, input, T);
    result.pairs.push_back({l, clean.attn[l], clean.mlp[l], out.attn, out.mlp});
  }
  return result;
}

LocalRemoval run_with_local_removal(const ModelBundle& model, std::span<const TokenId> tokens,
                                    std::size_t layer, const LocalRemovalOptions& options) {
  return run_with_local_removal(model, forward_with_tape(model, tokens), layer, options);
}

ResidualTape run_intervention(const ModelBundle& model, std::span<const TokenId> tokens,
                              const InterventionSpec& spec, const MeanResidual* mean) {
  spec.validate(model.config.n_layers, tokens.size());
  return std::visit(
      overloaded{
          [&](const SkipLayer& s) { return run_with_skip(model, tokens, s.layer); },
          [&](const SkipLayerUpToPosition& s) {
            return run_with_skip_upto(model, tokens, s.layer, s.until);
          },
          [&](const RemoveContributionLocal&) -> ResidualTape {
            throw ContractError("local removal does not produce a propagated tape");
          },
          [&](const EraseResidual& s) {
            if (!mean) throw ContractError("erasure requires a mean residual");
            return run_with_erasure(model, tokens, s.layer, s.position, *mean);
          },
      },
      spec.kind);
}

}  // namespace residscope

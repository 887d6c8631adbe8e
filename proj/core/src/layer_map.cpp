// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "residscope/layer_map.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemm.hpp"
#include "residscope/errors.hpp"
#include "residscope/parallel.hpp"
#include "residscope/rng.hpp"

namespace residscope {

namespace {

void require_same_tokenizer(const ModelBundle& a, const ModelBundle& b) {
  if (!(a.tokenizer == b.tokenizer) || a.config.vocab_size != b.config.vocab_size) {
    throw TokenizerMismatchError("layer map: the two models use different tokenizers (" +
                                 std::to_string(a.tokenizer.vocab_size()) + " vs " +
                                 std::to_string(b.tokenizer.vocab_size()) + " tokens)");
  }
}

void require_corpus(std::span<const std::vector<TokenId>> corpus) {
  if (corpus.empty()) throw ContractError("layer map: empty corpus");
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t d) {
  std::vector<double> v;
  v.reserve(rows.size() * d);
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  return Tensor({rows.size(), d}, std::move(v));
}

// In-place lower Cholesky factor of the n×n matrix a. Returns false on a
// non-positive pivot.
bool cholesky(std::vector<double>& a, std::size_t n) {
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i * n + i]));
  const double tol = scale * 1e-13 * static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > tol)) return false;
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  return true;
}

// Solves (L Lᵀ) X = B for n×r B, overwriting B.
void cholesky_solve(const std::vector<double>& l, std::size_t n, std::vector<double>& b,
                    std::size_t r) {
  for (std::size_t c = 0; c < r; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i * r + c];
      for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * b[k * r + c];
      b[i * r + c] = s / l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
      double s = b[i * r + c];
      for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k * r + c];
      b[i * r + c] = s / l[i * n + i];
    }
  }
}

struct Moments {
  std::size_t n;
  std::size_t d_in, d_out;
  std::span<const double> shift_x, shift_y, sx, sy, sxx, sxy;
};

std::vector<double> centered_scatter(const Moments& m) {
  const double n = static_cast<double>(m.n);
  std::vector<double> c(m.d_in * m.d_in);
  for (std::size_t i = 0; i < m.d_in; ++i)
    for (std::size_t j = 0; j < m.d_in; ++j)
      c[i * m.d_in + j] = m.sxx[i * m.d_in + j] - m.sx[i] * m.sx[j] / n;
  return c;
}

double scatter_trace(const Moments& m) {
  const double n = static_cast<double>(m.n);
  double t = 0.0;
  for (std::size_t i = 0; i < m.d_in; ++i) t += m.sxx[i * m.d_in + i] - m.sx[i] * m.sx[i] / n;
  return t;
}

AffineMap solve_moments(const Moments& m, double lambda) {
  if (m.n == 0) throw ContractError("ridge: no samples");
  if (!(lambda >= 0.0)) throw ContractError("ridge: lambda must be nonnegative");
  const double n = static_cast<double>(m.n);
  auto a = centered_scatter(m);
  for (std::size_t i = 0; i < m.d_in; ++i) a[i * m.d_in + i] += lambda;
  std::vector<double> rhs(m.d_in * m.d_out);
  for (std::size_t i = 0; i < m.d_in; ++i)
    for (std::size_t j = 0; j < m.d_out; ++j)
      rhs[i * m.d_out + j] = m.sxy[i * m.d_out + j] - m.sx[i] * m.sy[j] / n;
  if (!cholesky(a, m.d_in)) {
    throw RegularizationRequiredError(
        lambda == 0.0 ? "ridge: centered scatter is singular; a positive lambda is required"
                      : "ridge: system is numerically singular; increase lambda");
  }
  cholesky_solve(a, m.d_in, rhs, m.d_out);
  // b = ȳ − x̄ W, with means restored from the shifts.
  std::vector<double> b(m.d_out);
  for (std::size_t j = 0; j < m.d_out; ++j) {
    double s = m.shift_y[j] + m.sy[j] / n;
    for (std::size_t i = 0; i < m.d_in; ++i)
      s -= (m.shift_x[i] + m.sx[i] / n) * rhs[i * m.d_out + j];
    b[j] = s;
  }
  return AffineMap{Tensor({m.d_in, m.d_out}, std::move(rhs)), std::move(b)};
}

void accumulate_outer(std::vector<double>& acc, const std::vector<double>& a,
                      const std::vector<double>& b, std::size_t rows, std::size_t da,
                      std::size_t db) {
  std::vector<double> tmp(da * db);
  detail::gemm_tn(a.data(), b.data(), tmp.data(), da, rows, db);
  for (std::size_t i = 0; i < tmp.size(); ++i) acc[i] += tmp[i];
}

}  // namespace

ActivationPairSet collect_pairs(const ModelBundle& source, const ModelBundle& target,
                                std::span<const std::vector<TokenId>> corpus) {
  require_same_tokenizer(source, target);
  require_corpus(corpus);
  const std::size_t L1 = source.config.n_layers, L2 = target.config.n_layers;
  std::vector<std::vector<std::vector<double>>> xs(L1 + 1), ys(L2 + 1);
  ActivationPairSet set;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto ta = forward_with_tape(source, corpus[s]);
    const auto tb = forward_with_tape(target, corpus[s]);
    for (std::size_t t = 0; t < corpus[s].size(); ++t) {
      for (std::size_t m = 0; m <= L1; ++m) {
        const auto r = ta.residuals[m].row(t);
        xs[m].emplace_back(r.begin(), r.end());
      }
      for (std::size_t l = 0; l <= L2; ++l) {
        const auto r = tb.residuals[l].row(t);
        ys[l].emplace_back(r.begin(), r.end());
      }
      set.sequence.push_back(s);
      set.position.push_back(t);
    }
  }
  for (auto& x : xs) set.x.push_back(stack_rows(x, source.config.d_model));
  for (auto& y : ys) set.y.push_back(stack_rows(y, target.config.d_model));
  return set;
}

Tensor AffineMap::apply(const Tensor& x) const {
  const Tensor xw = matmul(x, w);
  std::vector<double> v(xw.data().begin(), xw.data().end());
  const std::size_t d = b.size();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b[i % d];
  return Tensor(xw.shape(), std::move(v));
}

RidgeAccumulator::RidgeAccumulator(std::size_t d_in, std::size_t d_out)
    : d_in_(d_in),
      d_out_(d_out),
      sx_(d_in, 0.0),
      sy_(d_out, 0.0),
      sxx_(d_in * d_in, 0.0),
      sxy_(d_in * d_out, 0.0) {
  if (d_in == 0 || d_out == 0) throw ContractError("ridge: zero-width features");
}

void RidgeAccumulator::add(std::span<const double> x, std::span<const double> y) {
  if (x.size() != d_in_ || y.size() != d_out_) {
    throw DimensionError("ridge: sample widths " + std::to_string(x.size()) + "/" +
                         std::to_string(y.size()) + ", expected " + std::to_string(d_in_) +
                         "/" + std::to_string(d_out_));
  }
  if (n_ == 0) {
    shift_x_.assign(x.begin(), x.end());
    shift_y_.assign(y.begin(), y.end());
  }
  std::vector<double> xc(d_in_), yc(d_out_);
  for (std::size_t i = 0; i < d_in_; ++i) xc[i] = x[i] - shift_x_[i];
  for (std::size_t j = 0; j < d_out_; ++j) yc[j] = y[j] - shift_y_[j];
  for (std::size_t i = 0; i < d_in_; ++i) {
    sx_[i] += xc[i];
    for (std::size_t k = 0; k < d_in_; ++k) sxx_[i * d_in_ + k] += xc[i] * xc[k];
    for (std::size_t j = 0; j < d_out_; ++j) sxy_[i * d_out_ + j] += xc[i] * yc[j];
  }
  for (std::size_t j = 0; j < d_out_; ++j) {
    sy_[j] += yc[j];
    syy_ += yc[j] * yc[j];
  }
  ++n_;
}

void RidgeAccumulator::add_rows(const Tensor& x, const Tensor& y) {
  if (x.rows() != y.rows()) throw DimensionError("ridge: row counts differ");
  for (std::size_t r = 0; r < x.rows(); ++r) add(x.row(r), y.row(r));
}

double RidgeAccumulator::feature_scale() const {
  if (n_ == 0) return 0.0;
  return scatter_trace({n_, d_in_, d_out_, shift_x_, shift_y_, sx_, sy_, sxx_, sxy_}) /
         static_cast<double>(d_in_);
}

AffineMap RidgeAccumulator::solve(double lambda) const {
  return solve_moments({n_, d_in_, d_out_, shift_x_, shift_y_, sx_, sy_, sxx_, sxy_}, lambda);
}

double RidgeAccumulator::objective(const AffineMap& map, double lambda) const {
  // With e = y − xW − b written in shifted coordinates x' = x − x₀,
  // y' = y − y₀ and c = y₀ − x₀W − b: e = y' − x'W + c.
  const std::size_t di = d_in_, dout = d_out_;
  const double n = static_cast<double>(n_);
  const auto& w = map.w;
  std::vector<double> c(dout);
  for (std::size_t j = 0; j < dout; ++j) {
    double s = shift_y_[j] - map.b[j];
    for (std::size_t i = 0; i < di; ++i) s -= shift_x_[i] * w[i * dout + j];
    c[j] = s;
  }
  // Σ‖y'‖² − 2 tr(WᵀSxy) + tr(Wᵀ Sxx W) + 2 cᵀ(Σy' − Wᵀ Σx') + n‖c‖²
  double obj = syy_;
  for (std::size_t i = 0; i < di; ++i)
    for (std::size_t j = 0; j < dout; ++j) obj -= 2.0 * w[i * dout + j] * sxy_[i * dout + j];
  std::vector<double> sw(di * dout, 0.0);
  detail::gemm(sxx_.data(), w.data().data(), sw.data(), di, di, dout);
  for (std::size_t i = 0; i < di * dout; ++i) obj += w[i] * sw[i];
  for (std::size_t j = 0; j < dout; ++j) {
    double proj = sy_[j];
    for (std::size_t i = 0; i < di; ++i) proj -= w[i * dout + j] * sx_[i];
    obj += 2.0 * c[j] * proj;
    obj += n * c[j] * c[j];
  }
  double wn = 0.0;
  for (double v : w.data()) wn += v * v;
  return obj + lambda * wn;
}

AffineMap fit_map(const Tensor& x, const Tensor& y, double lambda) {
  if (x.rows() == 0) throw ContractError("fit_map: no samples");
  RidgeAccumulator acc(x.cols(), y.cols());
  acc.add_rows(x, y);
  return acc.solve(lambda);
}

MapEval eval_map(const AffineMap& map, const Tensor& x, const Tensor& y) {
  if (x.rows() != y.rows()) throw DimensionError("eval_map: row counts differ");
  const Tensor pred = map.apply(x);
  MapEval e;
  double sum = 0.0;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const auto yr = y.row(r);
    const auto pr = pred.row(r);
    const double ny = l2_norm(yr);
    if (ny < kZeroNorm) {
      ++e.excluded;
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < yr.size(); ++j) s += (yr[j] - pr[j]) * (yr[j] - pr[j]);
    sum += std::sqrt(s) / ny;
    ++e.count;
  }
  e.rel_error = e.count ? sum / static_cast<double>(e.count) : 0.0;
  return e;
}

bool in_eval_split(std::span<const TokenId> sequence, std::size_t position,
                   const MapGridOptions& options) {
  std::uint64_t h = mix64(options.seed ^ 0x6c61796572ULL);
  for (auto t : sequence) h = mix64(h ^ t);
  h = mix64(h ^ (static_cast<std::uint64_t>(position) + 1));
  return h % options.eval_mod == 0;
}

// Shared moments for the whole grid: one Sxx per source layer, one Sxy per
// (source, target) pair.
class MapGridBuilder {
 public:
  MapGridBuilder(std::size_t l1, std::size_t d1, std::size_t l2, std::size_t d2)
      : l1_(l1), d1_(d1), l2_(l2), d2_(d2) {
    shift_x_.assign(l1 + 1, std::vector<double>(d1, 0.0));
    shift_y_.assign(l2 + 1, std::vector<double>(d2, 0.0));
    sx_.assign(l1 + 1, std::vector<double>(d1, 0.0));
    sy_.assign(l2 + 1, std::vector<double>(d2, 0.0));
    sxx_.assign(l1 + 1, std::vector<double>(d1 * d1, 0.0));
    sxy_.assign((l1 + 1) * (l2 + 1), std::vector<double>(d1 * d2, 0.0));
  }

  // Adds the selected rows of one sequence's residuals.
  void add(const ResidualTape& a, const ResidualTape& b, std::span<const std::size_t> rows) {
    if (rows.empty()) return;
    if (n_ == 0) {
      for (std::size_t m = 0; m <= l1_; ++m) {
        const auto r = a.residuals[m].row(rows[0]);
        shift_x_[m].assign(r.begin(), r.end());
      }
      for (std::size_t l = 0; l <= l2_; ++l) {
        const auto r = b.residuals[l].row(rows[0]);
        shift_y_[l].assign(r.begin(), r.end());
      }
    }
    const std::size_t k = rows.size();
    std::vector<std::vector<double>> xc(l1_ + 1), yc(l2_ + 1);
    for (std::size_t m = 0; m <= l1_; ++m) xc[m] = shifted(a.residuals[m], rows, shift_x_[m]);
    for (std::size_t l = 0; l <= l2_; ++l) yc[l] = shifted(b.residuals[l], rows, shift_y_[l]);
    for (std::size_t m = 0; m <= l1_; ++m) {
      column_sums(sx_[m], xc[m], k, d1_);
      accumulate_outer(sxx_[m], xc[m], xc[m], k, d1_, d1_);
      for (std::size_t l = 0; l <= l2_; ++l)
        accumulate_outer(sxy_[m * (l2_ + 1) + l], xc[m], yc[l], k, d1_, d2_);
    }
    for (std::size_t l = 0; l <= l2_; ++l) column_sums(sy_[l], yc[l], k, d2_);
    n_ += k;
  }

  std::size_t count() const { return n_; }

  Moments moments(std::size_t m, std::size_t l) const {
    return {n_, d1_, d2_, shift_x_[m], shift_y_[l], sx_[m], sy_[l], sxx_[m],
            sxy_[m * (l2_ + 1) + l]};
  }

 private:
  static std::vector<double> shifted(const Tensor& h, std::span<const std::size_t> rows,
                                     const std::vector<double>& shift) {
    const std::size_t d = shift.size();
    std::vector<double> out(rows.size() * d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto r = h.row(rows[i]);
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = r[j] - shift[j];
    }
    return out;
  }

  static void column_sums(std::vector<double>& acc, const std::vector<double>& rows,
                          std::size_t k, std::size_t d) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < d; ++j) acc[j] += rows[i * d + j];
  }

  std::size_t l1_, d1_, l2_, d2_;
  std::size_t n_ = 0;
  std::vector<std::vector<double>> shift_x_, shift_y_, sx_, sy_, sxx_, sxy_;
};

MapGrid map_grid(const ModelBundle& source, const ModelBundle& target,
                 std::span<const std::vector<TokenId>> corpus, const MapGridOptions& options) {
  require_same_tokenizer(source, target);
  require_corpus(corpus);
  if (options.eval_mod < 2) throw ContractError("layer map: eval_mod must be at least 2");
  const std::size_t L1 = source.config.n_layers, L2 = target.config.n_layers;
  const std::size_t d1 = source.config.d_model, d2 = target.config.d_model;

  std::vector<std::vector<std::size_t>> train_rows(corpus.size()), eval_rows(corpus.size());
  for (std::size_t s = 0; s < corpus.size(); ++s)
    for (std::size_t t = 0; t < corpus[s].size(); ++t)
      (in_eval_split(corpus[s], t, options) ? eval_rows : train_rows)[s].push_back(t);

  MapGridBuilder builder(L1, d1, L2, d2);
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (train_rows[s].empty()) continue;
    builder.add(forward_with_tape(source, corpus[s]), forward_with_tape(target, corpus[s]),
                train_rows[s]);
  }
  if (builder.count() == 0) throw ContractError("layer map: training split is empty");

  const std::size_t cells = (L1 + 1) * (L2 + 1);
  auto maps = parallel_map<AffineMap>(cells, [&](std::size_t i) {
    const auto mom = builder.moments(i / (L2 + 1), i % (L2 + 1));
    const double lambda = options.relative_lambda * scatter_trace(mom) / static_cast<double>(d1);
    return solve_moments(mom, lambda);
  });

  std::vector<double> err_sum(cells, 0.0);
  std::vector<std::size_t> err_count(cells, 0);
  std::size_t excluded = 0, n_eval = 0;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    if (eval_rows[s].empty()) continue;
    const auto ta = forward_with_tape(source, corpus[s]);
    const auto tb = forward_with_tape(target, corpus[s]);
    n_eval += eval_rows[s].size();
    for (std::size_t m = 0; m <= L1; ++m) {
      std::vector<std::vector<double>> xr;
      for (auto t : eval_rows[s]) xr.emplace_back(ta.residuals[m].row(t).begin(),
                                                  ta.residuals[m].row(t).end());
      const Tensor x = stack_rows(xr, d1);
      for (std::size_t l = 0; l <= L2; ++l) {
        std::vector<std::vector<double>> yr;
        for (auto t : eval_rows[s]) yr.emplace_back(tb.residuals[l].row(t).begin(),
                                                    tb.residuals[l].row(t).end());
        const auto e = eval_map(maps[m * (L2 + 1) + l], x, stack_rows(yr, d2));
        err_sum[m * (L2 + 1) + l] += e.rel_error * static_cast<double>(e.count);
        err_count[m * (L2 + 1) + l] += e.count;
        excluded += e.excluded;
      }
    }
  }
  if (n_eval == 0) throw ContractError("layer map: evaluation split is empty");

  MapGrid out;
  out.relative_lambda = options.relative_lambda;
  out.n_train = builder.count();
  out.n_eval = n_eval;
  out.excluded = excluded;
  auto& g = out.rel_error;
  g.name = "layer_map";
  g.row_axis = "source layer";
  g.col_axis = "target layer";
  g.rows = layer_ticks(L1 + 1);
  g.cols = layer_ticks(L2 + 1);
  g.values.resize(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    if (err_count[i]) g.values[i] = err_sum[i] / static_cast<double>(err_count[i]);
  }
  g.meta.reduction = "mean";
  g.meta.seed = options.seed;
  g.meta.flags["n_train"] = std::to_string(out.n_train);
  g.meta.flags["n_eval"] = std::to_string(out.n_eval);
  g.meta.flags["excluded"] = std::to_string(out.excluded);
  return out;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw UndefinedScoreError("rank correlation needs two equal-length samples of size >= 2");
  }
  auto ranks = [](std::span<const double> x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
      const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedScoreError("rank correlation of a constant ranking");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double diagonality(const HeatmapGrid& grid) {
  grid.validate();
  const std::size_t R = grid.n_rows(), C = grid.n_cols();
  if (R == 0 || C < 2) throw UndefinedScoreError("diagonality needs at least two target layers");
  std::vector<double> l_idx, best_m;
  for (std::size_t l = 0; l < C; ++l) {
    std::optional<std::size_t> best;
    for (std::size_t m = 0; m < R; ++m) {
      const auto& v = grid.at(m, l);
      if (v && (!best || *v < *grid.at(*best, l))) best = m;
    }
    if (!best) continue;
    l_idx.push_back(static_cast<double>(l));
    best_m.push_back(static_cast<double>(*best));
  }
  return spearman(l_idx, best_m);
}

}  // namespace residscope

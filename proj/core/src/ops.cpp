// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "gemm.hpp"
#include "node.hpp"
#include "residscope/errors.hpp"
#include "residscope/tensor.hpp"

namespace residscope {

using detail::make_result;
using detail::Node;
using GradSpans = std::span<const std::span<double>>;

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n);
  detail::gemm(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_result({m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](const Node&, std::span<const double> g, GradSpans pg) {
                       std::vector<double> tmp;
                       if (!pg[0].empty()) {
                         tmp.resize(m * k);
                         detail::gemm_nt(g.data(), b.data().data(), tmp.data(), m, n, k);
                         for (std::size_t i = 0; i < m * k; ++i) pg[0][i] += tmp[i];
                       }
                       if (!pg[1].empty()) {
                         tmp.resize(k * n);
                         detail::gemm_tn(a.data().data(), g.data(), tmp.data(), k, m, n);
                         for (std::size_t i = 0; i < k * n; ++i) pg[1][i] += tmp[i];
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [n](const Node&, std::span<const double> g, GradSpans pg) {
                       for (auto& p : pg)
                         if (!p.empty())
                           for (std::size_t i = 0; i < n; ++i) p[i] += g[i];
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [n](const Node&, std::span<const double> g, GradSpans pg) {
                       if (!pg[0].empty())
                         for (std::size_t i = 0; i < n; ++i) pg[0][i] += g[i];
                       if (!pg[1].empty())
                         for (std::size_t i = 0; i < n; ++i) pg[1][i] -= g[i];
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b, n](const Node&, std::span<const double> g, GradSpans pg) {
                       if (!pg[0].empty())
                         for (std::size_t i = 0; i < n; ++i) pg[0][i] += g[i] * b[i];
                       if (!pg[1].empty())
                         for (std::size_t i = 0; i < n; ++i) pg[1][i] += g[i] * a[i];
                     });
}

Tensor scale(const Tensor& a, double factor) {
  const auto n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * factor;
  return make_result(a.shape(), std::move(out), {a},
                     [n, factor](const Node&, std::span<const double> g, GradSpans pg) {
                       for (std::size_t i = 0; i < n; ++i) pg[0][i] += g[i] * factor;
                     });
}

Tensor silu(const Tensor& x) {
  const auto n = x.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] / (1.0 + std::exp(-x[i]));
  return make_result(x.shape(), std::move(out), {x},
                     [x, n](const Node&, std::span<const double> g, GradSpans pg) {
                       for (std::size_t i = 0; i < n; ++i) {
                         const double s = 1.0 / (1.0 + std::exp(-x[i]));
                         pg[0][i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const auto n = x.numel();
  return make_result({}, {acc}, {x}, [n](const Node&, std::span<const double> g, GradSpans pg) {
    for (std::size_t i = 0; i < n; ++i) pg[0][i] += g[0];
  });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * c;
    double* o = out.data() + i * c;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      o[j] = std::exp(in[j] - mx);
      z += o[j];
    }
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x},
                     [r, c](const Node& self, std::span<const double> g, GradSpans pg) {
                       const double* y = self.value.data();
                       for (std::size_t i = 0; i < r; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                         for (std::size_t j = 0; j < c; ++j)
                           pg[0][i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                       }
                     });
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  const std::size_t r = x.rows(), d = x.cols();
  if (d == 0) throw DimensionError("rmsnorm: zero-width input");
  if (gain.numel() != d) {
    throw DimensionError("rmsnorm: gain " + shape_string(gain.shape()) + " does not match width " +
                         std::to_string(d));
  }
  std::vector<double> inv(r);
  std::vector<double> out(r * d);
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * d;
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += in[j] * in[j];
    const double ms = ss / static_cast<double>(d) + eps;
    inv[i] = ms > 0.0 ? 1.0 / std::sqrt(ms) : 0.0;
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = in[j] * inv[i] * gain[j];
  }
  return make_result(
      x.shape(), std::move(out), {x, gain},
      [x, gain, inv = std::move(inv), r, d](const Node&, std::span<const double> g, GradSpans pg) {
        for (std::size_t i = 0; i < r; ++i) {
          const double* in = x.data().data() + i * d;
          const double* gi = g.data() + i * d;
          if (!pg[1].empty())
            for (std::size_t j = 0; j < d; ++j) pg[1][j] += gi[j] * in[j] * inv[i];
          if (!pg[0].empty()) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += gi[j] * gain[j] * in[j];
            const double coef = inv[i] * inv[i] * inv[i] * dot / static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j)
              pg[0][i * d + j] += inv[i] * gi[j] * gain[j] - coef * in[j];
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const std::uint32_t> ids) {
  require_matrix(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols(), t = ids.size();
  std::vector<double> out(t * d);
  for (std::size_t i = 0; i < t; ++i) {
    if (ids[i] >= v) {
      throw ContractError("embedding: token id " + std::to_string(ids[i]) +
                          " out of range for vocabulary " + std::to_string(v));
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<std::uint32_t> idv(ids.begin(), ids.end());
  return make_result({t, d}, std::move(out), {table},
                     [idv = std::move(idv), d](const Node&, std::span<const double> g, GradSpans pg) {
                       for (std::size_t i = 0; i < idv.size(); ++i)
                         for (std::size_t j = 0; j < d; ++j) pg[0][idv[i] * d + j] += g[i * d + j];
                     });
}

namespace {

struct RopeTable {
  std::vector<double> cos, sin;  // seq_len × half
};

RopeTable rope_table(std::size_t seq_len, std::size_t head_dim, double theta) {
  const std::size_t half = head_dim / 2;
  RopeTable tab{std::vector<double>(seq_len * half), std::vector<double>(seq_len * half)};
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
    for (std::size_t p = 0; p < seq_len; ++p) {
      const double ang = static_cast<double>(p) * freq;
      tab.cos[p * half + i] = std::cos(ang);
      tab.sin[p * half + i] = std::sin(ang);
    }
  }
  return tab;
}

void rotate(const double* in, double* out, std::size_t rows, std::size_t d, std::size_t n_heads,
            std::size_t seq_len, const RopeTable& tab, double sign) {
  const std::size_t hd = d / n_heads, half = hd / 2;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t p = r % seq_len;
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t base = r * d + h * hd;
      for (std::size_t i = 0; i < half; ++i) {
        const double c = tab.cos[p * half + i], s = sign * tab.sin[p * half + i];
        const double x0 = in[base + 2 * i], x1 = in[base + 2 * i + 1];
        out[base + 2 * i] = x0 * c - x1 * s;
        out[base + 2 * i + 1] = x0 * s + x1 * c;
      }
    }
  }
}

}  // namespace

Tensor rope(const Tensor& x, std::size_t n_heads, double theta, std::size_t seq_len) {
  require_matrix(x, "rope");
  const std::size_t rows = x.rows(), d = x.cols();
  if (n_heads == 0 || d % n_heads != 0 || (d / n_heads) % 2 != 0) {
    throw DimensionError("rope: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(n_heads) + " even-sized heads");
  }
  if (seq_len == 0 || rows % seq_len != 0) throw DimensionError("rope: rows not a multiple of seq_len");
  auto tab = std::make_shared<RopeTable>(rope_table(seq_len, d / n_heads, theta));
  std::vector<double> out(rows * d);
  rotate(x.data().data(), out.data(), rows, d, n_heads, seq_len, *tab, 1.0);
  return make_result(x.shape(), std::move(out), {x},
                     [tab, rows, d, n_heads, seq_len](const Node&, std::span<const double> g,
                                                      GradSpans pg) {
                       std::vector<double> back(rows * d);
                       rotate(g.data(), back.data(), rows, d, n_heads, seq_len, *tab, -1.0);
                       for (std::size_t i = 0; i < rows * d; ++i) pg[0][i] += back[i];
                     });
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t n_heads,
                        std::size_t seq_len) {
  require_matrix(q, "causal_attention");
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const std::size_t rows = q.rows(), d = q.cols();
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("causal_attention: bad head count");
  if (seq_len == 0 || rows % seq_len != 0) {
    throw DimensionError("causal_attention: rows not a multiple of seq_len");
  }
  const std::size_t hd = d / n_heads, n_seq = rows / seq_len, T = seq_len;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));

  // probs[(b, h)][i][j] for j ≤ i, stored densely as T×T.
  auto probs = std::make_shared<std::vector<double>>(n_seq * n_heads * T * T, 0.0);
  std::vector<double> out(rows * d, 0.0);
  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  for (std::size_t b = 0; b < n_seq; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      double* P = probs->data() + (b * n_heads + h) * T * T;
      for (std::size_t i = 0; i < T; ++i) {
        const double* qi = Q + (b * T + i) * d + h * hd;
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = K + (b * T + j) * d + h * hd;
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          P[i * T + j] = s * sc;
          mx = std::max(mx, P[i * T + j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          P[i * T + j] = std::exp(P[i * T + j] - mx);
          z += P[i * T + j];
        }
        for (std::size_t j = 0; j <= i; ++j) P[i * T + j] /= z;
        double* oi = out.data() + (b * T + i) * d + h * hd;
        for (std::size_t j = 0; j <= i; ++j) {
          const double p = P[i * T + j];
          const double* vj = V + (b * T + j) * d + h * hd;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  return make_result(
      q.shape(), std::move(out), {q, k, v},
      [q, k, v, probs, n_heads, n_seq, T, d, hd, sc](const Node&, std::span<const double> g,
                                                     GradSpans pg) {
        const double* Q = q.data().data();
        const double* K = k.data().data();
        const double* V = v.data().data();
        std::vector<double> dp(T);
        for (std::size_t b = 0; b < n_seq; ++b) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            const double* P = probs->data() + (b * n_heads + h) * T * T;
            for (std::size_t i = 0; i < T; ++i) {
              const double* gi = g.data() + (b * T + i) * d + h * hd;
              // dV_j += P_ij · dO_i ; dP_ij = dO_i · V_j
              double dot = 0.0;
              for (std::size_t j = 0; j <= i; ++j) {
                const double* vj = V + (b * T + j) * d + h * hd;
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += gi[c] * vj[c];
                dp[j] = s;
                dot += s * P[i * T + j];
                if (!pg[2].empty()) {
                  double* dv = pg[2].data() + (b * T + j) * d + h * hd;
                  for (std::size_t c = 0; c < hd; ++c) dv[c] += P[i * T + j] * gi[c];
                }
              }
              const double* qi = Q + (b * T + i) * d + h * hd;
              for (std::size_t j = 0; j <= i; ++j) {
                const double ds = P[i * T + j] * (dp[j] - dot) * sc;
                const double* kj = K + (b * T + j) * d + h * hd;
                if (!pg[0].empty()) {
                  double* dq = pg[0].data() + (b * T + i) * d + h * hd;
                  for (std::size_t c = 0; c < hd; ++c) dq[c] += ds * kj[c];
                }
                if (!pg[1].empty()) {
                  double* dk = pg[1].data() + (b * T + j) * d + h * hd;
                  for (std::size_t c = 0; c < hd; ++c) dk[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

Tensor weighted_nll(const Tensor& logits, std::span<const std::uint32_t> targets,
                    std::span<const double> weights) {
  require_matrix(logits, "weighted_nll");
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r || weights.size() != r) {
    throw DimensionError("weighted_nll: targets/weights length must equal logits rows");
  }
  auto soft = std::make_shared<std::vector<double>>(r * c, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (weights[i] == 0.0) continue;
    if (targets[i] >= c) throw ContractError("weighted_nll: target id out of range");
    const double* in = logits.data().data() + i * c;
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, in[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      (*soft)[i * c + j] = std::exp(in[j] - mx);
      z += (*soft)[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) (*soft)[i * c + j] /= z;
    const double lse = mx + std::log(z);
    total += weights[i] * (lse - in[targets[i]]);
  }
  std::vector<std::uint32_t> tg(targets.begin(), targets.end());
  std::vector<double> wt(weights.begin(), weights.end());
  return make_result({}, {total}, {logits},
                     [soft, tg = std::move(tg), wt = std::move(wt), r, c](
                         const Node&, std::span<const double> g, GradSpans pg) {
                       for (std::size_t i = 0; i < r; ++i) {
                         if (wt[i] == 0.0) continue;
                         const double f = g[0] * wt[i];
                         for (std::size_t j = 0; j < c; ++j) pg[0][i * c + j] += f * (*soft)[i * c + j];
                         pg[0][i * c + tg[i]] -= f;
                       }
                     });
}

}  // namespace residscope

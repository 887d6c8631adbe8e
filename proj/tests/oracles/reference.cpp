// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

using residscope::ModelBundle;
using residscope::Tensor;
using residscope::TokenId;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.data()[r * t.cols() + c];
  return m;
}

Mat weight(const Tensor& t) { return to_mat(t); }

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Mat matmul(const Mat& a, const Mat& b) {
  const std::size_t n = a.size(), k = b.size(), p = b.empty() ? 0 : b[0].size();
  Mat c(n, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].size() != k) throw std::invalid_argument("oracle matmul: shape mismatch");
    for (std::size_t j = 0; j < p; ++j) {
      double s = 0.0;
      for (std::size_t x = 0; x < k; ++x) s += a[i][x] * b[x][j];
      c[i][j] = s;
    }
  }
  return c;
}

Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] += b[i][j];
  return c;
}

Mat sub(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) c[i][j] -= b[i][j];
  return c;
}

Mat rmsnorm(const Mat& x, const std::vector<double>& gain, double eps) {
  Mat y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double ms = 0.0;
    for (double v : x[i]) ms += v * v;
    ms /= static_cast<double>(x[i].size());
    const double inv = 1.0 / std::sqrt(ms + eps);
    for (std::size_t j = 0; j < x[i].size(); ++j) y[i][j] = x[i][j] * inv * gain[j];
  }
  return y;
}

Mat softmax_rows(const Mat& x) {
  Mat y = x;
  for (auto& row : y) {
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (auto& v : row) z += (v = std::exp(v - mx));
    for (auto& v : row) v /= z;
  }
  return y;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

double max_abs_diff(const Mat& a, const Tensor& b) { return max_abs_diff(a, to_mat(b)); }

namespace {

Mat rotary(const Mat& x, std::size_t n_heads, double theta) {
  Mat y = x;
  const std::size_t d = x.empty() ? 0 : x[0].size(), hd = d / n_heads;
  for (std::size_t p = 0; p < x.size(); ++p) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t i = 0; i < hd / 2; ++i) {
        const double ang = static_cast<double>(p) /
                           std::pow(theta, static_cast<double>(2 * i) / static_cast<double>(hd));
        const std::size_t a = h * hd + 2 * i, b = a + 1;
        y[p][a] = x[p][a] * std::cos(ang) - x[p][b] * std::sin(ang);
        y[p][b] = x[p][a] * std::sin(ang) + x[p][b] * std::cos(ang);
      }
    }
  }
  return y;
}

Mat attention(const Mat& q, const Mat& k, const Mat& v, std::size_t n_heads) {
  const std::size_t T = q.size(), d = q[0].size(), hd = d / n_heads;
  Mat out(T, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < n_heads; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> s(i + 1);
      for (std::size_t j = 0; j <= i; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[i][h * hd + c] * k[j][h * hd + c];
        s[j] = dot / std::sqrt(static_cast<double>(hd));
      }
      const double mx = *std::max_element(s.begin(), s.end());
      double z = 0.0;
      for (auto& x : s) z += (x = std::exp(x - mx));
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t c = 0; c < hd; ++c) out[i][h * hd + c] += s[j] / z * v[j][h * hd + c];
    }
  }
  return out;
}

}  // namespace

Layer layer(const ModelBundle& m, std::size_t l, const Mat& h) {
  const auto& c = m.config;
  const auto& w = m.layers[l];
  const Mat xn = rmsnorm(h, vec(w.attn_norm), c.rms_eps);
  const Mat q = rotary(matmul(xn, weight(w.wq)), c.n_heads, c.rope_theta);
  const Mat k = rotary(matmul(xn, weight(w.wk)), c.n_heads, c.rope_theta);
  const Mat v = matmul(xn, weight(w.wv));
  Layer out;
  out.attn = matmul(attention(q, k, v, c.n_heads), weight(w.wo));
  const Mat mid = add(h, out.attn);
  const Mat xn2 = rmsnorm(mid, vec(w.mlp_norm), c.rms_eps);
  Mat gate = matmul(xn2, weight(w.w_gate));
  const Mat up = matmul(xn2, weight(w.w_up));
  for (std::size_t i = 0; i < gate.size(); ++i)
    for (std::size_t j = 0; j < gate[i].size(); ++j)
      gate[i][j] = gate[i][j] / (1.0 + std::exp(-gate[i][j])) * up[i][j];
  out.mlp = matmul(gate, weight(w.w_down));
  out.next = add(mid, out.mlp);
  return out;
}

Mat head_logits(const ModelBundle& m, const Mat& h) {
  return matmul(rmsnorm(h, vec(m.final_norm), m.config.rms_eps), weight(m.w_out));
}

Mat head_probs(const ModelBundle& m, const Mat& h) { return softmax_rows(head_logits(m, h)); }

Tape forward(const ModelBundle& m, std::span<const TokenId> tokens, const Hook& hook) {
  Tape t;
  const Mat table = weight(m.embedding);
  Mat h;
  for (auto id : tokens) h.push_back(table.at(id));
  t.residuals.push_back(h);
  for (std::size_t l = 0; l < m.config.n_layers; ++l) {
    Layer out = layer(m, l, t.residuals.back());
    if (hook) hook(l, t.residuals.back(), out);
    t.attn.push_back(out.attn);
    t.mlp.push_back(out.mlp);
    t.residuals.push_back(out.next);
  }
  t.logits = head_logits(m, t.residuals.back());
  t.probs = softmax_rows(t.logits);
  return t;
}

Mat probs_from(const ModelBundle& m, std::size_t first, const Mat& h) {
  Mat cur = h;
  for (std::size_t l = first; l < m.config.n_layers; ++l) cur = layer(m, l, cur).next;
  return head_probs(m, cur);
}

double answer_log_prob(const ModelBundle& m, std::span<const TokenId> tokens,
                       std::size_t answer_begin, std::size_t answer_end, std::size_t first,
                       const Mat& h) {
  const Mat p = probs_from(m, first, h);
  double f = 0.0;
  for (std::size_t pos = answer_begin; pos < answer_end; ++pos) f += std::log(p[pos - 1][tokens[pos]]);
  return f;
}

double central_difference(const std::function<double(const std::vector<double>&)>& f,
                          std::vector<double> x, std::size_t i, double step) {
  const double x0 = x[i];
  x[i] = x0 + step;
  const double fp = f(x);
  x[i] = x0 - step;
  const double fm = f(x);
  return (fp - fm) / (2.0 * step);
}

Mat gauss_jordan_solve(Mat a, Mat b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw std::runtime_error("oracle: singular system");
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    const double inv = 1.0 / a[col][col];
    for (auto& v : a[col]) v *= inv;
    for (auto& v : b[col]) v *= inv;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) a[r][c] -= f * a[col][c];
      for (std::size_t c = 0; c < b[r].size(); ++c) b[r][c] -= f * b[col][c];
    }
  }
  return b;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle

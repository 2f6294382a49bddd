// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace rtpb {

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  Linear p{Matrix(in, out), Matrix(1, out)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : p.weight.flat()) w = scale * rng.normal();
  return p;
}

Linear zeros_like(const Linear& p) { return {Matrix(p.weight.rows(), p.weight.cols()), Matrix(1, p.bias.cols())}; }

Matrix linear_forward(const Linear& p, const Matrix& x) {
  Matrix y = matmul(x, p.weight);
  const auto b = p.bias.row(0);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return y;
}

Matrix linear_backward(const Linear& p, const Matrix& x, const Matrix& upstream, Linear& grads) {
  auto g = matmul_backward(x, p.weight, upstream);
  add_inplace(grads.weight, g.d_b);
  auto gb = grads.bias.row(0);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    const auto r = upstream.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) gb[j] += r[j];
  }
  return std::move(g.d_a);
}

LayerNorm make_layer_norm(std::size_t dim) { return {Matrix(1, dim, 1.0), Matrix(1, dim, 0.0)}; }

Matrix layer_norm_forward(const LayerNorm& p, const Matrix& x, LayerNormCache& cache) {
  const std::size_t n = x.cols();
  cache.normalized = Matrix(x.rows(), n);
  cache.inv_std.assign(x.rows(), 0.0);
  Matrix y(x.rows(), n);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[i] = inv_std;
    auto xhat = cache.normalized.row(i);
    auto out = y.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[j] = (in[j] - mean) * inv_std;
      out[j] = p.gain(0, j) * xhat[j] + p.shift(0, j);
    }
  }
  return y;
}

Matrix layer_norm_backward(const LayerNorm& p, const LayerNormCache& cache, const Matrix& upstream,
                           LayerNorm& grads) {
  const std::size_t n = upstream.cols();
  Matrix dx(upstream.rows(), n);
  std::vector<double> dxhat(n);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    const auto g = upstream.row(i);
    const auto xhat = cache.normalized.row(i);
    double sum = 0.0;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      grads.gain(0, j) += g[j] * xhat[j];
      grads.shift(0, j) += g[j];
      dxhat[j] = g[j] * p.gain(0, j);
      sum += dxhat[j];
      dot += dxhat[j] * xhat[j];
    }
    auto out = dx.row(i);
    const double scale = cache.inv_std[i] / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = scale * (static_cast<double>(n) * dxhat[j] - sum - xhat[j] * dot);
    }
  }
  return dx;
}

Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, AttentionCache& cache) {
  if (q.cols() != k.cols()) throw std::invalid_argument("attention: query and key widths differ");
  if (k.rows() != v.rows()) throw std::invalid_argument("attention: key and value lengths differ");
  Matrix scores = matmul_nt(q, k);
  scale_inplace(scores, 1.0 / std::sqrt(static_cast<double>(q.cols())));
  cache.probs = row_softmax(scores);
  return matmul(cache.probs, v);
}

AttentionGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionCache& cache,
                                  const Matrix& upstream) {
  AttentionGrads g;
  g.d_v = matmul_tn(cache.probs, upstream);
  const Matrix d_probs = matmul_nt(upstream, v);
  Matrix d_scores = row_softmax_backward(cache.probs, d_probs);
  scale_inplace(d_scores, 1.0 / std::sqrt(static_cast<double>(q.cols())));
  g.d_q = matmul(d_scores, k);
  g.d_k = matmul_tn(d_scores, q);
  return g;
}

MultiHeadAttention make_multi_head_attention(std::size_t d_model, Rng& rng) {
  MultiHeadAttention p;
  p.query = make_linear(d_model, d_model, rng);
  p.key = make_linear(d_model, d_model, rng);
  p.value = make_linear(d_model, d_model, rng);
  p.output = make_linear(d_model, d_model, rng);
  return p;
}

namespace {

std::size_t head_width(std::size_t d_model, int num_heads) {
  if (num_heads < 1 || d_model % static_cast<std::size_t>(num_heads) != 0) {
    throw std::invalid_argument("model dimension " + std::to_string(d_model) + " not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  return d_model / static_cast<std::size_t>(num_heads);
}

}  // namespace

Matrix multi_head_attention_forward(const MultiHeadAttention& p, const Matrix& x, int num_heads,
                                    MultiHeadCache& cache) {
  const std::size_t d_model = p.query.weight.cols();
  const std::size_t width = head_width(d_model, num_heads);
  if (x.cols() != p.query.weight.rows()) throw std::invalid_argument("multi-head attention: input width mismatch");
  cache.input = x;
  cache.q = linear_forward(p.query, x);
  cache.k = linear_forward(p.key, x);
  cache.v = linear_forward(p.value, x);
  cache.heads.assign(static_cast<std::size_t>(num_heads), {});
  cache.concat = Matrix(x.rows(), d_model);
  for (std::size_t h = 0; h < cache.heads.size(); ++h) {
    const std::size_t begin = h * width;
    const Matrix out = attention_forward(slice_cols(cache.q, begin, width), slice_cols(cache.k, begin, width),
                                         slice_cols(cache.v, begin, width), cache.heads[h]);
    add_into_cols(cache.concat, out, begin);
  }
  return linear_forward(p.output, cache.concat);
}

Matrix multi_head_attention_backward(const MultiHeadAttention& p, const MultiHeadCache& cache, int num_heads,
                                     const Matrix& upstream, MultiHeadAttention& grads) {
  const std::size_t d_model = p.query.weight.cols();
  const std::size_t width = head_width(d_model, num_heads);
  const Matrix d_concat = linear_backward(p.output, cache.concat, upstream, grads.output);
  Matrix d_q(cache.q.rows(), d_model);
  Matrix d_k(cache.k.rows(), d_model);
  Matrix d_v(cache.v.rows(), d_model);
  for (std::size_t h = 0; h < cache.heads.size(); ++h) {
    const std::size_t begin = h * width;
    const auto g = attention_backward(slice_cols(cache.q, begin, width), slice_cols(cache.k, begin, width),
                                      slice_cols(cache.v, begin, width), cache.heads[h],
                                      slice_cols(d_concat, begin, width));
    add_into_cols(d_q, g.d_q, begin);
    add_into_cols(d_k, g.d_k, begin);
    add_into_cols(d_v, g.d_v, begin);
  }
  Matrix dx = linear_backward(p.query, cache.input, d_q, grads.query);
  add_inplace(dx, linear_backward(p.key, cache.input, d_k, grads.key));
  add_inplace(dx, linear_backward(p.value, cache.input, d_v, grads.value));
  return dx;
}

EncoderLayer make_encoder_layer(std::size_t d_model, std::size_t d_ff, Rng& rng) {
  EncoderLayer p;
  p.norm1 = make_layer_norm(d_model);
  p.attention = make_multi_head_attention(d_model, rng);
  p.norm2 = make_layer_norm(d_model);
  p.ffn_in = make_linear(d_model, d_ff, rng);
  p.ffn_out = make_linear(d_ff, d_model, rng);
  return p;
}

Matrix encoder_layer_forward(const EncoderLayer& p, const Matrix& x, int num_heads, EncoderLayerCache& cache) {
  cache.normed1 = layer_norm_forward(p.norm1, x, cache.norm1);
  cache.hidden = add(x, multi_head_attention_forward(p.attention, cache.normed1, num_heads, cache.attention));
  cache.normed2 = layer_norm_forward(p.norm2, cache.hidden, cache.norm2);
  cache.ffn_pre = linear_forward(p.ffn_in, cache.normed2);
  cache.ffn_act = cache.ffn_pre;
  for (double& v : cache.ffn_act.flat()) v = v > 0.0 ? v : 0.0;
  return add(cache.hidden, linear_forward(p.ffn_out, cache.ffn_act));
}

Matrix encoder_layer_backward(const EncoderLayer& p, const EncoderLayerCache& cache, int num_heads,
                              const Matrix& upstream, EncoderLayer& grads) {
  Matrix d_act = linear_backward(p.ffn_out, cache.ffn_act, upstream, grads.ffn_out);
  const auto pre = cache.ffn_pre.flat();
  auto da = d_act.flat();
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (!(pre[i] > 0.0)) da[i] = 0.0;
  }
  const Matrix d_normed2 = linear_backward(p.ffn_in, cache.normed2, d_act, grads.ffn_in);
  Matrix d_hidden = upstream;
  add_inplace(d_hidden, layer_norm_backward(p.norm2, cache.norm2, d_normed2, grads.norm2));
  const Matrix d_normed1 =
      multi_head_attention_backward(p.attention, cache.attention, num_heads, d_hidden, grads.attention);
  Matrix dx = d_hidden;
  add_inplace(dx, layer_norm_backward(p.norm1, cache.norm1, d_normed1, grads.norm1));
  return dx;
}

void zero_output_projections(EncoderLayer& p) {
  p.attention.output.weight.fill(0.0);
  p.attention.output.bias.fill(0.0);
  p.ffn_out.weight.fill(0.0);
  p.ffn_out.bias.fill(0.0);
}

}  // namespace rtpb

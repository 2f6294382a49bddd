// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <concepts>
#include <string>
#include <type_traits>
#include <vector>

#include "rtpb/matrix.hpp"
#include "rtpb/rng.hpp"

namespace rtpb {

template <typename P, typename T>
concept ParamsOf = std::same_as<std::remove_const_t<P>, T>;

/// y = x W + b with W in x out and b 1 x out.
struct Linear {
  Matrix weight;
  Matrix bias;
};

Linear make_linear(std::size_t in, std::size_t out, Rng& rng);
Linear zeros_like(const Linear& p);

Matrix linear_forward(const Linear& p, const Matrix& x);
/// Accumulates parameter gradients into `grads` and returns dL/dx.
Matrix linear_backward(const Linear& p, const Matrix& x, const Matrix& upstream, Linear& grads);

template <ParamsOf<Linear> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".weight", p.weight);
  f(prefix + ".bias", p.bias);
}

/// Row-wise layer normalization with learned gain and shift.
struct LayerNorm {
  Matrix gain;   // 1 x d
  Matrix shift;  // 1 x d
};

inline constexpr double kLayerNormEps = 1e-5;

LayerNorm make_layer_norm(std::size_t dim);

struct LayerNormCache {
  Matrix normalized;
  std::vector<double> inv_std;
};

Matrix layer_norm_forward(const LayerNorm& p, const Matrix& x, LayerNormCache& cache);
Matrix layer_norm_backward(const LayerNorm& p, const LayerNormCache& cache, const Matrix& upstream,
                           LayerNorm& grads);

template <ParamsOf<LayerNorm> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".gain", p.gain);
  f(prefix + ".shift", p.shift);
}

/// softmax(Q K^T / sqrt(d_k)) V.
struct AttentionCache {
  Matrix probs;
};

Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v, AttentionCache& cache);

struct AttentionGrads {
  Matrix d_q;
  Matrix d_k;
  Matrix d_v;
};

AttentionGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionCache& cache,
                                  const Matrix& upstream);

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
};

MultiHeadAttention make_multi_head_attention(std::size_t d_model, Rng& rng);

struct MultiHeadCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<AttentionCache> heads;
  Matrix concat;
};

/// Throws std::invalid_argument when d_model is not divisible by num_heads.
Matrix multi_head_attention_forward(const MultiHeadAttention& p, const Matrix& x, int num_heads,
                                    MultiHeadCache& cache);
Matrix multi_head_attention_backward(const MultiHeadAttention& p, const MultiHeadCache& cache, int num_heads,
                                     const Matrix& upstream, MultiHeadAttention& grads);

template <ParamsOf<MultiHeadAttention> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.query, prefix + ".query", f);
  visit_params(p.key, prefix + ".key", f);
  visit_params(p.value, prefix + ".value", f);
  visit_params(p.output, prefix + ".output", f);
}

/// Pre-norm transformer encoder layer:
///   h = x + MHA(LN1(x)),  y = h + W2 relu(W1 LN2(h)).
struct EncoderLayer {
  LayerNorm norm1;
  MultiHeadAttention attention;
  LayerNorm norm2;
  Linear ffn_in;
  Linear ffn_out;
};

EncoderLayer make_encoder_layer(std::size_t d_model, std::size_t d_ff, Rng& rng);

struct EncoderLayerCache {
  LayerNormCache norm1;
  Matrix normed1;
  MultiHeadCache attention;
  Matrix hidden;
  LayerNormCache norm2;
  Matrix normed2;
  Matrix ffn_pre;
  Matrix ffn_act;
};

Matrix encoder_layer_forward(const EncoderLayer& p, const Matrix& x, int num_heads, EncoderLayerCache& cache);
Matrix encoder_layer_backward(const EncoderLayer& p, const EncoderLayerCache& cache, int num_heads,
                              const Matrix& upstream, EncoderLayer& grads);

template <ParamsOf<EncoderLayer> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.norm1, prefix + ".norm1", f);
  visit_params(p.attention, prefix + ".attention", f);
  visit_params(p.norm2, prefix + ".norm2", f);
  visit_params(p.ffn_in, prefix + ".ffn_in", f);
  visit_params(p.ffn_out, prefix + ".ffn_out", f);
}

/// Zeroes the attention output projection and the second FFN map, which
/// turns the layer into the identity.
void zero_output_projections(EncoderLayer& p);

/// Zero-valued parameter set with the same shapes as `p`.
template <typename P>
P zeros_like_params(const P& p) {
  P out = p;
  visit_params(out, "", [](const std::string&, Matrix& m) { m.fill(0.0); });
  return out;
}

}  // namespace rtpb

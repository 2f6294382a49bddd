// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/dtrans.hpp"

#include <algorithm>
#include <stdexcept>

#include "rtpb/rng.hpp"

namespace rtpb {

void DTransConfig::validate() const {
  if (d_model < 1 || d_v < 1 || d_pos < 1 || d_embed < 1 || d_ff < 1) {
    throw std::invalid_argument("dtrans widths must be positive");
  }
  if (num_heads < 1 || d_model % num_heads != 0) {
    throw std::invalid_argument("d_model " + std::to_string(d_model) + " not divisible by " +
                                std::to_string(num_heads) + " heads");
  }
  if (object_layers < 1 || relation_layers < 1) throw std::invalid_argument("encoder stacks need at least one layer");
  if (num_object_classes < 1 || num_relation_slots < 2) throw std::invalid_argument("dtrans label space too small");
}

nlohmann::json to_json(const DTransConfig& c) {
  return {{"d_model", c.d_model},
          {"d_v", c.d_v},
          {"d_pos", c.d_pos},
          {"d_embed", c.d_embed},
          {"num_heads", c.num_heads},
          {"object_layers", c.object_layers},
          {"relation_layers", c.relation_layers},
          {"d_ff", c.d_ff},
          {"num_object_classes", c.num_object_classes},
          {"num_relation_slots", c.num_relation_slots}};
}

DTransConfig dtrans_config_from_json(const nlohmann::json& j) {
  DTransConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.d_v = j.value("d_v", c.d_v);
  c.d_pos = j.value("d_pos", c.d_pos);
  c.d_embed = j.value("d_embed", c.d_embed);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.object_layers = j.value("object_layers", c.object_layers);
  c.relation_layers = j.value("relation_layers", c.relation_layers);
  c.d_ff = j.value("d_ff", c.d_ff);
  c.num_object_classes = j.value("num_object_classes", c.num_object_classes);
  c.num_relation_slots = j.value("num_relation_slots", c.num_relation_slots);
  return c;
}

DTransParameters init_dtrans(const DTransConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(config.d_model);
  const auto d_ff = static_cast<std::size_t>(config.d_ff);
  DTransParameters p;
  p.position = make_linear(8, static_cast<std::size_t>(config.d_pos), rng);
  p.label_embedding = Matrix(static_cast<std::size_t>(config.num_object_classes),
                             static_cast<std::size_t>(config.d_embed));
  for (double& v : p.label_embedding.flat()) v = 0.02 * rng.normal();
  p.object_fusion = make_linear(static_cast<std::size_t>(config.d_pos + config.d_v + config.d_embed), d, rng);
  for (int i = 0; i < config.object_layers; ++i) p.object_encoder.push_back(make_encoder_layer(d, d_ff, rng));
  p.object_classifier = make_linear(d, static_cast<std::size_t>(config.num_object_classes), rng);
  p.pair_fusion = make_linear(static_cast<std::size_t>(config.d_v) + 2 * d, d, rng);
  for (int i = 0; i < config.relation_layers; ++i) p.relation_encoder.push_back(make_encoder_layer(d, d_ff, rng));
  p.relation_classifier = make_linear(d, static_cast<std::size_t>(config.num_relation_slots), rng);
  return p;
}

Matrix embed_objects(const DTransParameters& params, std::span<const ObjectProposal> proposals,
                     std::span<const int> labels, EmbedCache& cache) {
  if (proposals.empty()) throw std::invalid_argument("embed_objects: empty proposal list");
  if (labels.size() != proposals.size()) throw std::invalid_argument("embed_objects: one label per proposal");
  const std::size_t n = proposals.size();
  const std::size_t d_v = proposals.front().visual_feature.size();
  const std::size_t d_embed = params.label_embedding.cols();
  cache.box_features = Matrix(n, 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto f = box_features(proposals[i].box);
    std::copy(f.begin(), f.end(), cache.box_features.row(i).begin());
  }
  cache.position = linear_forward(params.position, cache.box_features);
  const std::size_t d_pos = cache.position.cols();
  cache.fused_input = Matrix(n, d_pos + d_v + d_embed);
  cache.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& feat = proposals[i].visual_feature;
    if (feat.size() != d_v) throw std::invalid_argument("embed_objects: visual feature width mismatch");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= params.label_embedding.rows()) {
      throw std::out_of_range("embed_objects: label outside embedding table");
    }
    auto row = cache.fused_input.row(i);
    const auto pos = cache.position.row(i);
    const auto emb = params.label_embedding.row(static_cast<std::size_t>(labels[i]));
    std::copy(pos.begin(), pos.end(), row.begin());
    std::copy(feat.begin(), feat.end(), row.begin() + static_cast<std::ptrdiff_t>(d_pos));
    std::copy(emb.begin(), emb.end(), row.begin() + static_cast<std::ptrdiff_t>(d_pos + d_v));
  }
  return linear_forward(params.object_fusion, cache.fused_input);
}

void embed_objects_backward(const DTransParameters& params, const EmbedCache& cache, const Matrix& upstream,
                            DTransParameters& grads) {
  const Matrix d_input = linear_backward(params.object_fusion, cache.fused_input, upstream, grads.object_fusion);
  const std::size_t d_pos = cache.position.cols();
  const std::size_t d_embed = params.label_embedding.cols();
  const std::size_t embed_begin = d_input.cols() - d_embed;
  linear_backward(params.position, cache.box_features, slice_cols(d_input, 0, d_pos), grads.position);
  for (std::size_t i = 0; i < d_input.rows(); ++i) {
    auto g = grads.label_embedding.row(static_cast<std::size_t>(cache.labels[i]));
    for (std::size_t j = 0; j < d_embed; ++j) g[j] += d_input(i, embed_begin + j);
  }
}

namespace {

Matrix run_stack(const std::vector<EncoderLayer>& layers, int heads, const Matrix& x, EncoderStackCache& cache) {
  cache.assign(layers.size(), {});
  Matrix h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) h = encoder_layer_forward(layers[i], h, heads, cache[i]);
  return h;
}

Matrix run_stack_backward(const std::vector<EncoderLayer>& layers, int heads, const EncoderStackCache& cache,
                          const Matrix& upstream, std::vector<EncoderLayer>& grads) {
  Matrix d = upstream;
  for (std::size_t i = layers.size(); i > 0; --i) {
    d = encoder_layer_backward(layers[i - 1], cache[i - 1], heads, d, grads[i - 1]);
  }
  return d;
}

}  // namespace

Matrix encode_objects(const DTransConfig& config, const DTransParameters& params, const Matrix& tokens,
                      EncoderStackCache& cache) {
  return run_stack(params.object_encoder, config.num_heads, tokens, cache);
}

Matrix encode_objects_backward(const DTransConfig& config, const DTransParameters& params,
                               const EncoderStackCache& cache, const Matrix& upstream, DTransParameters& grads) {
  return run_stack_backward(params.object_encoder, config.num_heads, cache, upstream, grads.object_encoder);
}

Matrix classify_objects(const DTransParameters& params, const Matrix& object_features) {
  return linear_forward(params.object_classifier, object_features);
}

Matrix fuse_pairs(const DTransParameters& params, const Matrix& object_features, const Matrix& unions,
                  std::span<const ObjectPair> pairs, FuseCache& cache) {
  if (unions.rows() != pairs.size()) throw std::invalid_argument("fuse_pairs: one union feature per pair");
  const std::size_t n = object_features.rows();
  const std::size_t d = object_features.cols();
  const std::size_t d_u = unions.cols();
  cache.pairs.assign(pairs.begin(), pairs.end());
  cache.input = Matrix(pairs.size(), d_u + 2 * d);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, o] = pairs[p];
    if (s == o) throw std::invalid_argument("fuse_pairs: subject and object are the same proposal");
    if (s < 0 || o < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(o) >= n) {
      throw std::invalid_argument("fuse_pairs: pair index out of range");
    }
    auto row = cache.input.row(p);
    const auto u = unions.row(p);
    const auto es = object_features.row(static_cast<std::size_t>(s));
    const auto eo = object_features.row(static_cast<std::size_t>(o));
    std::copy(u.begin(), u.end(), row.begin());
    std::copy(es.begin(), es.end(), row.begin() + static_cast<std::ptrdiff_t>(d_u));
    std::copy(eo.begin(), eo.end(), row.begin() + static_cast<std::ptrdiff_t>(d_u + d));
  }
  return linear_forward(params.pair_fusion, cache.input);
}

Matrix fuse_pairs_backward(const DTransParameters& params, const FuseCache& cache, std::size_t num_objects,
                           std::size_t d_model, const Matrix& upstream, DTransParameters& grads) {
  const Matrix d_input = linear_backward(params.pair_fusion, cache.input, upstream, grads.pair_fusion);
  const std::size_t d_u = d_input.cols() - 2 * d_model;
  Matrix d_objects(num_objects, d_model);
  for (std::size_t p = 0; p < cache.pairs.size(); ++p) {
    auto ds = d_objects.row(static_cast<std::size_t>(cache.pairs[p].first));
    auto d_o = d_objects.row(static_cast<std::size_t>(cache.pairs[p].second));
    for (std::size_t j = 0; j < d_model; ++j) {
      ds[j] += d_input(p, d_u + j);
      d_o[j] += d_input(p, d_u + d_model + j);
    }
  }
  return d_objects;
}

Matrix encode_relations_and_classify(const DTransConfig& config, const DTransParameters& params,
                                     const Matrix& pair_tokens, RelationHeadCache& cache) {
  cache.encoded = run_stack(params.relation_encoder, config.num_heads, pair_tokens, cache.layers);
  return linear_forward(params.relation_classifier, cache.encoded);
}

Matrix encode_relations_backward(const DTransConfig& config, const DTransParameters& params,
                                 const RelationHeadCache& cache, const Matrix& upstream, DTransParameters& grads) {
  const Matrix d_encoded =
      linear_backward(params.relation_classifier, cache.encoded, upstream, grads.relation_classifier);
  return run_stack_backward(params.relation_encoder, config.num_heads, cache.layers, d_encoded,
                            grads.relation_encoder);
}

SceneOutput forward(const DTransConfig& config, const DTransParameters& params, const SceneImage& image, Task task,
                    DTransCache& cache) {
  if (image.num_objects() < 2) throw std::invalid_argument("no pairs");
  SceneOutput out;
  out.input_labels = input_labels(image, task);
  const Matrix tokens = embed_objects(params, image.proposals, out.input_labels, cache.embed);
  cache.object_features = encode_objects(config, params, tokens, cache.objects);
  out.object_logits = classify_objects(params, cache.object_features);
  out.object_probs = row_softmax(out.object_logits);
  out.pairs = directed_pairs(image.num_objects());
  const Matrix pair_tokens =
      fuse_pairs(params, cache.object_features, union_matrix(image, out.pairs), out.pairs, cache.fuse);
  out.relation_logits = encode_relations_and_classify(config, params, pair_tokens, cache.relations);
  return out;
}

void backward(const DTransConfig& config, const DTransParameters& params, const DTransCache& cache,
              const Matrix& d_object_logits, const Matrix& d_relation_logits, DTransParameters& grads) {
  const Matrix d_pair_tokens = encode_relations_backward(config, params, cache.relations, d_relation_logits, grads);
  Matrix d_objects = fuse_pairs_backward(params, cache.fuse, cache.object_features.rows(),
                                         cache.object_features.cols(), d_pair_tokens, grads);
  if (!d_object_logits.empty()) {
    add_inplace(d_objects, linear_backward(params.object_classifier, cache.object_features, d_object_logits,
                                           grads.object_classifier));
  }
  const Matrix d_tokens = encode_objects_backward(config, params, cache.objects, d_objects, grads);
  embed_objects_backward(params, cache.embed, d_tokens, grads);
}

}  // namespace rtpb

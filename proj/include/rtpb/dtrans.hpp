// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtpb/layers.hpp"
#include "rtpb/scene.hpp"

namespace rtpb {

/// Sizes of the dual transformer. Defaults are toy scale; the published
/// configuration uses 4 object and 2 relation encoder layers.
struct DTransConfig {
  int d_model = 32;
  int d_v = 16;      // visual / union feature width
  int d_pos = 16;    // box encoding width
  int d_embed = 16;  // label embedding width
  int num_heads = 2;
  int object_layers = 2;
  int relation_layers = 1;
  int d_ff = 64;
  int num_object_classes = 1;
  int num_relation_slots = 2;  // background + foreground relations

  void validate() const;
  bool operator==(const DTransConfig&) const = default;
};

nlohmann::json to_json(const DTransConfig& config);
DTransConfig dtrans_config_from_json(const nlohmann::json& j);

struct DTransParameters {
  Linear position;           // 8 box features -> d_pos
  Matrix label_embedding;    // L_e x d_embed
  Linear object_fusion;      // [pos, visual, embed] -> d_model
  std::vector<EncoderLayer> object_encoder;
  Linear object_classifier;  // d_model -> L_e
  Linear pair_fusion;        // [union, subject, object] -> d_model
  std::vector<EncoderLayer> relation_encoder;
  Linear relation_classifier;  // d_model -> L_r + 1
};

template <ParamsOf<DTransParameters> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.position, prefix + "position", f);
  f(prefix + "label_embedding", p.label_embedding);
  visit_params(p.object_fusion, prefix + "object_fusion", f);
  for (std::size_t i = 0; i < p.object_encoder.size(); ++i) {
    visit_params(p.object_encoder[i], prefix + "object_encoder." + std::to_string(i), f);
  }
  visit_params(p.object_classifier, prefix + "object_classifier", f);
  visit_params(p.pair_fusion, prefix + "pair_fusion", f);
  for (std::size_t i = 0; i < p.relation_encoder.size(); ++i) {
    visit_params(p.relation_encoder[i], prefix + "relation_encoder." + std::to_string(i), f);
  }
  visit_params(p.relation_classifier, prefix + "relation_classifier", f);
}

/// Seeded initialization; the label embedding is N(0, 0.02^2).
DTransParameters init_dtrans(const DTransConfig& config, std::uint64_t seed);

// Stage-level operations. Each forward fills a cache consumed by the
// matching backward, which accumulates into `grads` and returns the
// gradient with respect to its matrix input.

struct EmbedCache {
  Matrix box_features;  // n x 8
  Matrix position;      // n x d_pos
  Matrix fused_input;   // n x (d_pos + d_v + d_embed)
  std::vector<int> labels;
};

/// One row per object: object_fusion([position(box), visual, embed(label)]).
/// Throws std::invalid_argument on an empty proposal list.
Matrix embed_objects(const DTransParameters& params, std::span<const ObjectProposal> proposals,
                     std::span<const int> labels, EmbedCache& cache);
void embed_objects_backward(const DTransParameters& params, const EmbedCache& cache, const Matrix& upstream,
                            DTransParameters& grads);

using EncoderStackCache = std::vector<EncoderLayerCache>;

Matrix encode_objects(const DTransConfig& config, const DTransParameters& params, const Matrix& tokens,
                      EncoderStackCache& cache);
Matrix encode_objects_backward(const DTransConfig& config, const DTransParameters& params,
                               const EncoderStackCache& cache, const Matrix& upstream, DTransParameters& grads);

/// Object classifier logits; apply row_softmax for probabilities.
Matrix classify_objects(const DTransParameters& params, const Matrix& object_features);

struct FuseCache {
  Matrix input;  // P x (d_v + 2 d_model)
  std::vector<ObjectPair> pairs;
};

/// pair_fusion([union(s,o), e_s, e_o]) per ordered pair. Throws
/// std::invalid_argument for s == o, out-of-range indices or a union matrix
/// whose row count differs from the pair count.
Matrix fuse_pairs(const DTransParameters& params, const Matrix& object_features, const Matrix& unions,
                  std::span<const ObjectPair> pairs, FuseCache& cache);
/// Returns the gradient with respect to the object features.
Matrix fuse_pairs_backward(const DTransParameters& params, const FuseCache& cache, std::size_t num_objects,
                           std::size_t d_model, const Matrix& upstream, DTransParameters& grads);

struct RelationHeadCache {
  EncoderStackCache layers;
  Matrix encoded;
};

Matrix encode_relations_and_classify(const DTransConfig& config, const DTransParameters& params,
                                     const Matrix& pair_tokens, RelationHeadCache& cache);
Matrix encode_relations_backward(const DTransConfig& config, const DTransParameters& params,
                                 const RelationHeadCache& cache, const Matrix& upstream, DTransParameters& grads);

/// Output of a full scene forward pass, shared by every relation model.
struct SceneOutput {
  Matrix object_logits;  // n x L_e (DTrans only; empty otherwise)
  Matrix object_probs;   // n x L_e
  std::vector<int> input_labels;
  std::vector<ObjectPair> pairs;
  Matrix relation_logits;  // P x (L_r + 1)
};

struct DTransCache {
  EmbedCache embed;
  EncoderStackCache objects;
  Matrix object_features;
  FuseCache fuse;
  RelationHeadCache relations;
};

/// Full pipeline over one image. Throws std::invalid_argument("no pairs")
/// when the image has fewer than two objects.
SceneOutput forward(const DTransConfig& config, const DTransParameters& params, const SceneImage& image, Task task,
                    DTransCache& cache);

/// Accumulates exact parameter gradients given dL/d(object logits) (may be
/// empty) and dL/d(relation logits).
void backward(const DTransConfig& config, const DTransParameters& params, const DTransCache& cache,
              const Matrix& d_object_logits, const Matrix& d_relation_logits, DTransParameters& grads);

}  // namespace rtpb

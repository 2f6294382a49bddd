// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/linear_model.hpp"

#include <algorithm>
#include <stdexcept>

#include "rtpb/rng.hpp"

namespace rtpb {

void LinearHeadConfig::validate() const {
  if (d_v < 1 || num_object_classes < 1 || num_relation_slots < 2) {
    throw std::invalid_argument("linear head sizes must be positive");
  }
}

nlohmann::json to_json(const LinearHeadConfig& c) {
  return {{"d_v", c.d_v}, {"num_object_classes", c.num_object_classes}, {"num_relation_slots", c.num_relation_slots}};
}

LinearHeadConfig linear_head_config_from_json(const nlohmann::json& j) {
  LinearHeadConfig c;
  c.d_v = j.value("d_v", c.d_v);
  c.num_object_classes = j.value("num_object_classes", c.num_object_classes);
  c.num_relation_slots = j.value("num_relation_slots", c.num_relation_slots);
  return c;
}

LinearHeadParameters init_linear_head(const LinearHeadConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  return {make_linear(config.input_width(), static_cast<std::size_t>(config.num_relation_slots), rng)};
}

Matrix linear_head_features(const LinearHeadConfig& config, const SceneImage& image, std::span<const int> labels,
                            const std::vector<ObjectPair>& pairs) {
  const Matrix unions = union_matrix(image, pairs);
  const auto d_v = static_cast<std::size_t>(config.d_v);
  const auto num_classes = static_cast<std::size_t>(config.num_object_classes);
  Matrix features(pairs.size(), config.input_width());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& s = image.proposals[static_cast<std::size_t>(pairs[p].first)];
    const auto& o = image.proposals[static_cast<std::size_t>(pairs[p].second)];
    if (unions.cols() != d_v || s.visual_feature.size() != d_v || o.visual_feature.size() != d_v) {
      throw std::invalid_argument("linear head: feature width mismatch");
    }
    auto row = features.row(p);
    std::copy(unions.row(p).begin(), unions.row(p).end(), row.begin());
    std::copy(s.visual_feature.begin(), s.visual_feature.end(), row.begin() + static_cast<std::ptrdiff_t>(d_v));
    std::copy(o.visual_feature.begin(), o.visual_feature.end(), row.begin() + static_cast<std::ptrdiff_t>(2 * d_v));
    const auto ls = static_cast<std::size_t>(labels[static_cast<std::size_t>(pairs[p].first)]);
    const auto lo = static_cast<std::size_t>(labels[static_cast<std::size_t>(pairs[p].second)]);
    if (ls >= num_classes || lo >= num_classes) throw std::out_of_range("linear head: label out of range");
    row[3 * d_v + ls] = 1.0;
    row[3 * d_v + num_classes + lo] = 1.0;
  }
  return features;
}

SceneOutput forward(const LinearHeadConfig& config, const LinearHeadParameters& params, const SceneImage& image,
                    Task task, LinearHeadCache& cache) {
  if (image.num_objects() < 2) throw std::invalid_argument("no pairs");
  SceneOutput out;
  out.input_labels = input_labels(image, task);
  out.pairs = directed_pairs(image.num_objects());
  const auto num_classes = static_cast<std::size_t>(config.num_object_classes);
  out.object_probs = Matrix(image.proposals.size(), num_classes);
  for (std::size_t i = 0; i < image.proposals.size(); ++i) {
    const auto& p = image.proposals[i];
    if (task == Task::PredCls) {
      out.object_probs(i, static_cast<std::size_t>(p.label)) = 1.0;
    } else {
      if (p.detector_scores.size() != num_classes) throw std::invalid_argument("detector score width mismatch");
      std::copy(p.detector_scores.begin(), p.detector_scores.end(), out.object_probs.row(i).begin());
    }
  }
  cache.features = linear_head_features(config, image, out.input_labels, out.pairs);
  out.relation_logits = linear_forward(params.head, cache.features);
  return out;
}

void backward(const LinearHeadConfig&, const LinearHeadParameters& params, const LinearHeadCache& cache,
              const Matrix&, const Matrix& d_relation_logits, LinearHeadParameters& grads) {
  linear_backward(params.head, cache.features, d_relation_logits, grads.head);
}

}  // namespace rtpb

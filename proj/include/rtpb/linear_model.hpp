// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>

#include "json.hpp"
#include "rtpb/dtrans.hpp"
#include "rtpb/layers.hpp"
#include "rtpb/scene.hpp"

namespace rtpb {

/// Single linear relation head over
/// [union, visual_s, visual_o, onehot(label_s), onehot(label_o)].
struct LinearHeadConfig {
  int d_v = 16;
  int num_object_classes = 1;
  int num_relation_slots = 2;

  void validate() const;
  std::size_t input_width() const {
    return 3 * static_cast<std::size_t>(d_v) + 2 * static_cast<std::size_t>(num_object_classes);
  }
  bool operator==(const LinearHeadConfig&) const = default;
};

nlohmann::json to_json(const LinearHeadConfig& config);
LinearHeadConfig linear_head_config_from_json(const nlohmann::json& j);

struct LinearHeadParameters {
  Linear head;
};

template <ParamsOf<LinearHeadParameters> P, typename F>
void visit_params(P& p, const std::string& prefix, F&& f) {
  visit_params(p.head, prefix + "head", f);
}

/// Weights N(0, 1/fan_in), zero bias.
LinearHeadParameters init_linear_head(const LinearHeadConfig& config, std::uint64_t seed);

struct LinearHeadCache {
  Matrix features;
};

/// Pair features for every ordered pair of `image`, subject-major.
Matrix linear_head_features(const LinearHeadConfig& config, const SceneImage& image, std::span<const int> labels,
                            const std::vector<ObjectPair>& pairs);

/// Object probabilities are one-hot ground truth (PredCls) or the detector
/// scores (SGCls); object_logits stays empty.
SceneOutput forward(const LinearHeadConfig& config, const LinearHeadParameters& params, const SceneImage& image,
                    Task task, LinearHeadCache& cache);

void backward(const LinearHeadConfig& config, const LinearHeadParameters& params, const LinearHeadCache& cache,
              const Matrix& d_object_logits, const Matrix& d_relation_logits, LinearHeadParameters& grads);

}  // namespace rtpb

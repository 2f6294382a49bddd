// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "rtpb/matrix.hpp"
#include "rtpb/scene.hpp"
#include "rtpb/stats.hpp"

namespace rtpb {

/// Long-tailed synthetic scene-graph generator settings.
struct SynthConfig {
  int num_object_classes = 20;
  int num_relations = 30;
  double zipf_s = 1.5;  // relation skew
  int train_images = 2000;
  int val_images = 0;
  int test_images = 500;
  int objects_min = 3;
  int objects_max = 6;
  int d_v = 16;
  double noise_sigma = 1.1;
  double background_fraction = 0.5;
  std::uint64_t seed = 7;
  // Scale of the relation prototype mixed into union features.
  double relation_signal = 1.0;
  // Spread of the per class-pair log-perturbation of P(r | s, o).
  double pair_logit_sigma = 1.0;
  // Ground-truth logit boost before the detector softmax.
  double detector_confidence = 3.0;

  void validate() const;
  LabelSpace label_space() const { return LabelSpace::make_default(num_object_classes, num_relations); }
};

nlohmann::json to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// w_i proportional to 1 / i^s for i = 1..num_classes, normalized.
std::vector<double> zipf_weights(int num_classes, double s);

/// Ground-truth generative model.
struct World {
  Matrix object_prototypes;    // L_e x d_v
  Matrix relation_prototypes;  // (L_r + 1) x d_v, row 0 = background
  Matrix conditional;          // (L_e * L_e) x L_r, row s * L_e + o = P(r | s, o)
  std::vector<double> target_marginal;

  std::span<const double> relation_given_pair(int subject, int object) const {
    return conditional.row(static_cast<std::size_t>(subject) * object_prototypes.rows() +
                           static_cast<std::size_t>(object));
  }
  bool operator==(const World&) const = default;
};

World build_world(const SynthConfig& config);

enum class Split { Train = 0, Val = 1, Test = 2 };
const char* split_name(Split split);

/// Images of one split; each image draws from its own substream, so any
/// split can be regenerated alone.
std::vector<SceneImage> generate_split(const SynthConfig& config, const World& world, Split split);

struct SynthDataset {
  World world;
  std::vector<SceneImage> train;
  std::vector<SceneImage> val;
  std::vector<SceneImage> test;
};

SynthDataset generate(const SynthConfig& config);

/// Class-level (subject label, object label, relation) triplets of all gt.
std::vector<Triplet> class_triplets(const std::vector<SceneImage>& images);

/// Histogram of foreground gt relations, [r - 1].
std::vector<double> relation_histogram(const std::vector<SceneImage>& images, int num_relations);

double total_variation(std::span<const double> p, std::span<const double> q);

}  // namespace rtpb

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rtpb/loss.hpp"
#include "rtpb/rng.hpp"

namespace rtpb {

namespace {

constexpr std::uint64_t kWorldStream = 0;
constexpr int kMarginalFitRounds = 200;

std::uint64_t split_seed(std::uint64_t seed, Split split) {
  return substream_seed(seed, 1 + static_cast<std::uint64_t>(split));
}

int split_size(const SynthConfig& c, Split split) {
  switch (split) {
    case Split::Train: return c.train_images;
    case Split::Val: return c.val_images;
    case Split::Test: return c.test_images;
  }
  return 0;
}

}  // namespace

void SynthConfig::validate() const {
  LabelSpace::make_default(num_object_classes, num_relations);
  if (!(zipf_s >= 0.0)) throw std::invalid_argument("zipf_s must be >= 0");
  if (train_images < 0 || val_images < 0 || test_images < 0) throw std::invalid_argument("split sizes must be >= 0");
  if (objects_min < 2 || objects_max < objects_min) {
    throw std::invalid_argument("objects per image must satisfy 2 <= min <= max");
  }
  if (d_v < 1) throw std::invalid_argument("d_v must be positive");
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("noise_sigma must be positive");
  if (!(background_fraction >= 0.0 && background_fraction < 1.0)) {
    throw std::invalid_argument("background_fraction must lie in [0, 1)");
  }
  if (!(relation_signal >= 0.0) || !(pair_logit_sigma >= 0.0) || !(detector_confidence >= 0.0)) {
    throw std::invalid_argument("synth scales must be >= 0");
  }
}

nlohmann::json to_json(const SynthConfig& c) {
  return {{"num_object_classes", c.num_object_classes},
          {"num_relations", c.num_relations},
          {"zipf_s", c.zipf_s},
          {"train_images", c.train_images},
          {"val_images", c.val_images},
          {"test_images", c.test_images},
          {"objects_min", c.objects_min},
          {"objects_max", c.objects_max},
          {"d_v", c.d_v},
          {"noise_sigma", c.noise_sigma},
          {"background_fraction", c.background_fraction},
          {"seed", c.seed},
          {"relation_signal", c.relation_signal},
          {"pair_logit_sigma", c.pair_logit_sigma},
          {"detector_confidence", c.detector_confidence}};
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  c.num_object_classes = j.value("num_object_classes", c.num_object_classes);
  c.num_relations = j.value("num_relations", c.num_relations);
  c.zipf_s = j.value("zipf_s", c.zipf_s);
  c.train_images = j.value("train_images", c.train_images);
  c.val_images = j.value("val_images", c.val_images);
  c.test_images = j.value("test_images", c.test_images);
  c.objects_min = j.value("objects_min", c.objects_min);
  c.objects_max = j.value("objects_max", c.objects_max);
  c.d_v = j.value("d_v", c.d_v);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.background_fraction = j.value("background_fraction", c.background_fraction);
  c.seed = j.value("seed", c.seed);
  c.relation_signal = j.value("relation_signal", c.relation_signal);
  c.pair_logit_sigma = j.value("pair_logit_sigma", c.pair_logit_sigma);
  c.detector_confidence = j.value("detector_confidence", c.detector_confidence);
  c.validate();
  return c;
}

std::vector<double> zipf_weights(int num_classes, double s) {
  if (num_classes < 1) throw std::invalid_argument("zipf_weights: need at least one class");
  if (!(s >= 0.0)) throw std::invalid_argument("zipf_weights: exponent must be >= 0");
  std::vector<double> w(static_cast<std::size_t>(num_classes));
  double total = 0.0;
  for (int i = 0; i < num_classes; ++i) {
    w[static_cast<std::size_t>(i)] = 1.0 / std::pow(static_cast<double>(i + 1), s);
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

World build_world(const SynthConfig& config) {
  config.validate();
  Rng rng(substream_seed(config.seed, kWorldStream));
  const auto num_classes = static_cast<std::size_t>(config.num_object_classes);
  const auto num_rel = static_cast<std::size_t>(config.num_relations);
  const auto d_v = static_cast<std::size_t>(config.d_v);

  World world;
  world.target_marginal = zipf_weights(config.num_relations, config.zipf_s);
  world.object_prototypes = Matrix(num_classes, d_v);
  for (double& v : world.object_prototypes.flat()) v = rng.normal();
  world.relation_prototypes = Matrix(num_rel + 1, d_v);
  for (double& v : world.relation_prototypes.flat()) v = config.relation_signal * rng.normal();

  // Pair-specific perturbations of the target, then iterative proportional
  // fitting so the average row (object classes are drawn uniformly) equals
  // the target marginal.
  const std::size_t rows = num_classes * num_classes;
  world.conditional = Matrix(rows, num_rel);
  for (std::size_t p = 0; p < rows; ++p) {
    auto row = world.conditional.row(p);
    for (std::size_t r = 0; r < num_rel; ++r) {
      row[r] = world.target_marginal[r] * std::exp(config.pair_logit_sigma * rng.normal());
    }
  }
  auto normalize_rows = [&] {
    for (std::size_t p = 0; p < rows; ++p) {
      auto row = world.conditional.row(p);
      const double total = std::accumulate(row.begin(), row.end(), 0.0);
      for (double& v : row) v /= total;
    }
  };
  normalize_rows();
  std::vector<double> mean(num_rel);
  for (int round = 0; round < kMarginalFitRounds; ++round) {
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t p = 0; p < rows; ++p)
      for (std::size_t r = 0; r < num_rel; ++r) mean[r] += world.conditional(p, r);
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t p = 0; p < rows; ++p)
      for (std::size_t r = 0; r < num_rel; ++r) world.conditional(p, r) *= world.target_marginal[r] / mean[r];
    normalize_rows();
  }
  return world;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

namespace {

SceneImage generate_image(const SynthConfig& config, const World& world, std::uint64_t seed) {
  Rng rng(seed);
  const auto num_classes = static_cast<std::uint64_t>(config.num_object_classes);
  const auto d_v = static_cast<std::size_t>(config.d_v);
  const int n = config.objects_min +
                static_cast<int>(rng.below(static_cast<std::uint64_t>(config.objects_max - config.objects_min + 1)));
  SceneImage image;
  image.proposals.resize(static_cast<std::size_t>(n));
  for (auto& obj : image.proposals) {
    obj.label = static_cast<int>(rng.below(num_classes));
    const double x1 = rng.uniform(0.0, 0.7);
    const double y1 = rng.uniform(0.0, 0.7);
    obj.box = {x1, y1, x1 + rng.uniform(0.1, 0.3), y1 + rng.uniform(0.1, 0.3)};
    const auto proto = world.object_prototypes.row(static_cast<std::size_t>(obj.label));
    obj.visual_feature.resize(d_v);
    for (std::size_t j = 0; j < d_v; ++j) obj.visual_feature[j] = proto[j] + config.noise_sigma * rng.normal();
    std::vector<double> logits(num_classes);
    for (auto& z : logits) z = rng.normal();
    logits[static_cast<std::size_t>(obj.label)] += config.detector_confidence;
    obj.detector_scores = softmax(logits);
  }

  const auto pairs = directed_pairs(n);
  const auto fg = std::min(pairs.size(), static_cast<std::size_t>(std::ceil(
                                             (1.0 - config.background_fraction) * static_cast<double>(pairs.size()))));
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<int> relation(pairs.size(), 0);
  for (std::size_t k = 0; k < fg; ++k) {
    const auto [s, o] = pairs[order[k]];
    const auto probs = world.relation_given_pair(image.proposals[static_cast<std::size_t>(s)].label,
                                                 image.proposals[static_cast<std::size_t>(o)].label);
    relation[order[k]] = 1 + static_cast<int>(rng.categorical(probs));
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, o] = pairs[p];
    const auto ps = world.object_prototypes.row(static_cast<std::size_t>(image.proposals[static_cast<std::size_t>(s)].label));
    const auto po = world.object_prototypes.row(static_cast<std::size_t>(image.proposals[static_cast<std::size_t>(o)].label));
    const auto pr = world.relation_prototypes.row(static_cast<std::size_t>(relation[p]));
    std::vector<double> u(d_v);
    for (std::size_t j = 0; j < d_v; ++j) u[j] = 0.5 * (ps[j] + po[j]) + pr[j] + config.noise_sigma * rng.normal();
    image.union_features.emplace(pairs[p], std::move(u));
    if (relation[p] != 0) image.gt.push_back(PairRelation{s, o, relation[p]});
  }
  return image;
}

}  // namespace

std::vector<SceneImage> generate_split(const SynthConfig& config, const World& world, Split split) {
  config.validate();
  const std::uint64_t seed = split_seed(config.seed, split);
  const int count = split_size(config, split);
  std::vector<SceneImage> images;
  images.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    images.push_back(generate_image(config, world, substream_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return images;
}

SynthDataset generate(const SynthConfig& config) {
  SynthDataset data;
  data.world = build_world(config);
  data.train = generate_split(config, data.world, Split::Train);
  data.val = generate_split(config, data.world, Split::Val);
  data.test = generate_split(config, data.world, Split::Test);
  return data;
}

std::vector<Triplet> class_triplets(const std::vector<SceneImage>& images) {
  std::vector<Triplet> out;
  for (const auto& image : images) {
    for (const auto& t : image.gt) {
      out.push_back(Triplet{image.proposals[static_cast<std::size_t>(t.subject)].label,
                            image.proposals[static_cast<std::size_t>(t.object)].label, t.relation});
    }
  }
  return out;
}

std::vector<double> relation_histogram(const std::vector<SceneImage>& images, int num_relations) {
  std::vector<double> hist(static_cast<std::size_t>(num_relations), 0.0);
  for (const auto& image : images)
    for (const auto& t : image.gt) hist[static_cast<std::size_t>(t.relation - 1)] += 1.0;
  return hist;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("total_variation: length mismatch");
  const double sp = std::accumulate(p.begin(), p.end(), 0.0);
  const double sq = std::accumulate(q.begin(), q.end(), 0.0);
  double tv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) tv += std::abs(p[i] / sp - q[i] / sq);
  return 0.5 * tv;
}

}  // namespace rtpb

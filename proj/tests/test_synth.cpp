// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "rtpb/dataset_io.hpp"
#include "rtpb/rng.hpp"
#include "rtpb/synth.hpp"

using namespace rtpb;

namespace {

SynthConfig small(std::uint64_t seed = 5) {
  SynthConfig c;
  c.num_object_classes = 8;
  c.num_relations = 6;
  c.train_images = 30;
  c.val_images = 10;
  c.test_images = 12;
  c.d_v = 8;
  c.seed = seed;
  return c;
}

std::string serialize(const std::vector<SceneImage>& images) {
  std::ostringstream out;
  write_images(out, images);
  return out.str();
}

}  // namespace

TEST(Zipf, Examples) {
  const auto u = zipf_weights(3, 0.0);
  for (double w : u) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  const auto h2 = zipf_weights(2, 1.0);
  EXPECT_NEAR(h2[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(h2[1], 1.0 / 3.0, 1e-15);
  const auto h3 = zipf_weights(3, 1.0);
  EXPECT_NEAR(h3[0], 6.0 / 11.0, 1e-15);
  EXPECT_NEAR(h3[1], 3.0 / 11.0, 1e-15);
  EXPECT_NEAR(h3[2], 2.0 / 11.0, 1e-15);
}

TEST(World, DeterministicAndNormalized) {
  const SynthConfig c;
  const World a = build_world(c);
  EXPECT_TRUE(a == build_world(c));
  auto other = c;
  other.seed = c.seed + 1;
  EXPECT_FALSE(a == build_world(other));
  for (std::size_t r = 0; r < a.conditional.rows(); ++r) {
    const auto row = a.conditional.row(r);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(World, MonteCarloMarginalMatchesZipf) {
  const SynthConfig c;
  const World world = build_world(c);
  Rng rng(20261015);
  std::vector<double> hist(static_cast<std::size_t>(c.num_relations), 0.0);
  for (int i = 0; i < 100000; ++i) {
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_object_classes)));
    const int o = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.num_object_classes)));
    hist[rng.categorical(world.relation_given_pair(s, o))] += 1.0;
  }
  const auto target = zipf_weights(c.num_relations, c.zipf_s);
  EXPECT_LE(total_variation(hist, target), 0.02);
}

TEST(Generate, EmptySplitAndFullForeground) {
  auto c = small();
  c.val_images = 0;
  EXPECT_TRUE(generate(c).val.empty());
  c.background_fraction = 0.0;
  for (const auto& img : generate(c).train) {
    const auto n = img.proposals.size();
    EXPECT_EQ(img.gt.size(), n * (n - 1));
  }
}

TEST(Generate, TrainHistogramMatchesZipf) {
  const SynthConfig c;  // 2000 training images
  const auto data = generate(c);
  ASSERT_EQ(data.train.size(), 2000u);
  EXPECT_LE(total_variation(relation_histogram(data.train, c.num_relations), zipf_weights(c.num_relations, c.zipf_s)),
            0.05);
}

TEST(Generate, ImageInvariants) {
  auto c = small();
  c.background_fraction = 0.3;
  for (const auto& img : generate(c).train) {
    const auto n = static_cast<int>(img.proposals.size());
    ASSERT_GE(n, c.objects_min);
    ASSERT_LE(n, c.objects_max);
    const auto pairs = static_cast<std::size_t>(n * (n - 1));
    EXPECT_EQ(img.gt.size(), static_cast<std::size_t>(std::ceil(0.7 * static_cast<double>(pairs))));
    EXPECT_EQ(img.union_features.size(), pairs);
    std::set<ObjectPair> seen;
    for (const auto& g : img.gt) {
      EXPECT_TRUE(seen.insert({g.subject, g.object}).second);
      EXPECT_NE(g.subject, g.object);
      EXPECT_GE(g.relation, 1);
      EXPECT_LE(g.relation, c.num_relations);
    }
    for (const auto& p : img.proposals) {
      EXPECT_LT(p.box[0], p.box[2]);
      EXPECT_LT(p.box[1], p.box[3]);
      EXPECT_NEAR(std::accumulate(p.detector_scores.begin(), p.detector_scores.end(), 0.0), 1.0, 1e-6);
      EXPECT_EQ(p.visual_feature.size(), static_cast<std::size_t>(c.d_v));
    }
  }
}

TEST(Generate, DeterministicAndSplitIndependent) {
  const auto c = small(9);
  const auto a = generate(c);
  const auto b = generate(c);
  EXPECT_EQ(serialize(a.train), serialize(b.train));
  EXPECT_EQ(serialize(a.test), serialize(b.test));
  EXPECT_NE(serialize(a.train), serialize(a.test));

  auto bigger = c;
  bigger.train_images = 3;  // other split sizes do not disturb the test stream
  EXPECT_EQ(serialize(generate_split(bigger, build_world(bigger), Split::Test)), serialize(a.test));
}

TEST(Generate, NearestPrototypeSeparability) {
  SynthConfig c;
  c.noise_sigma = 0.5;
  c.d_v = 16;
  c.train_images = 300;
  c.test_images = 0;
  const auto data = generate(c);
  std::size_t correct = 0, total = 0;
  for (const auto& img : data.train) {
    for (const auto& p : img.proposals) {
      int best = -1;
      double best_d = 0.0;
      for (std::size_t k = 0; k < data.world.object_prototypes.rows(); ++k) {
        double d = 0.0;
        for (std::size_t j = 0; j < p.visual_feature.size(); ++j) {
          const double diff = p.visual_feature[j] - data.world.object_prototypes(k, j);
          d += diff * diff;
        }
        if (best < 0 || d < best_d) {
          best = static_cast<int>(k);
          best_d = d;
        }
      }
      correct += best == p.label ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(total), 0.95);
}

TEST(SynthConfigCheck, Validation) {
  SynthConfig c;
  EXPECT_NO_THROW(c.validate());
  c.objects_min = 1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.background_fraction = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.noise_sigma = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(DatasetIo, JsonlRoundTrip) {
  const auto data = generate(small());
  const std::string text = serialize(data.train);
  std::istringstream in(text);
  const auto back = read_images(in);
  ASSERT_EQ(back.size(), data.train.size());
  EXPECT_EQ(serialize(back), text);
  EXPECT_EQ(back[0].gt, data.train[0].gt);
  const auto j = image_to_json(data.train[0]);
  for (const char* key : {"objects", "unions", "gt"}) EXPECT_TRUE(j.contains(key)) << key;
}

TEST(DatasetIo, DirectoryLayout) {
  const auto dir = std::filesystem::temp_directory_path() / "rtpb_test_synth_dir";
  std::filesystem::remove_all(dir);
  const auto c = small();
  const auto data = generate(c);
  write_dataset(dir, c, data);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "labels.json", "synth_config.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  EXPECT_EQ(read_labels(dir), c.label_space());
  EXPECT_EQ(serialize(read_split(dir, "test")), serialize(data.test));
  EXPECT_THROW(read_split(dir, "nope"), std::runtime_error);
  EXPECT_EQ(synth_config_from_json(read_json_file(dir / "synth_config.json")).seed, c.seed);
  std::filesystem::remove_all(dir);
}

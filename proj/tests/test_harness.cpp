// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include <gtest/gtest.h>

#include <filesystem>

#include "rtpb/dataset_io.hpp"
#include "rtpb/harness.hpp"
#include "rtpb/synth.hpp"

using namespace rtpb;

namespace {

SynthConfig tiny_synth() {
  SynthConfig s;
  s.num_object_classes = 6;
  s.num_relations = 5;
  s.train_images = 40;
  s.val_images = 6;
  s.test_images = 20;
  s.d_v = 8;
  s.seed = 13;
  return s;
}

const SynthDataset& tiny_data() {
  static const SynthDataset data = generate(tiny_synth());
  return data;
}

TrainData train_data() { return {tiny_synth().label_space(), tiny_data().train, tiny_data().val}; }

TrainConfig tiny_config(ModelKind model = ModelKind::Linear) {
  TrainConfig c;
  c.model = model;
  c.dtrans.d_model = 16;
  c.dtrans.d_v = 8;
  c.dtrans.d_pos = 8;
  c.dtrans.d_embed = 8;
  c.dtrans.d_ff = 32;
  c.optimizer.iterations = 25;
  c.optimizer.batch_size = 4;
  c.optimizer.learning_rate = 0.01;
  c.seed = 5;
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rtpb_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST(TrainConfigIo, RoundTripAndUnknownKeys) {
  auto c = tiny_config(ModelKind::DTrans);
  c.task = Task::SGCls;
  c.loss.kind = LossKind::RTPB;
  BiasSpec b;
  b.kind = BiasKind::EB;
  b.a = 0.5;
  c.bias = b;
  c.eval_ks = {10, 20};
  const auto j = to_json(c);
  EXPECT_EQ(train_config_from_json(j), c);
  auto bad = j;
  bad["learning_rate"] = 0.1;
  EXPECT_THROW(train_config_from_json(bad), std::invalid_argument);
}

TEST(TrainConfigCheck, Rejections) {
  auto expect_bad = [](auto mutate) {
    auto c = tiny_config();
    mutate(c);
    EXPECT_THROW(c.validate(), std::invalid_argument);
  };
  expect_bad([](TrainConfig& c) { c.optimizer.iterations = 0; });
  expect_bad([](TrainConfig& c) { c.optimizer.batch_size = 0; });
  expect_bad([](TrainConfig& c) { c.optimizer.learning_rate = 0.0; });
  expect_bad([](TrainConfig& c) { c.optimizer.momentum = 1.0; });
  expect_bad([](TrainConfig& c) { c.eval_ks = {50, 20}; });
  expect_bad([](TrainConfig& c) { c.eval_ks = {}; });
  expect_bad([](TrainConfig& c) {
    c.loss.kind = LossKind::CE;
    c.bias = BiasSpec{};
  });
  auto c = tiny_config();
  c.optimizer.iterations = 0;
  EXPECT_THROW(train(c, train_data()), std::invalid_argument);
}

TEST(Train, EmptyDatasetAndBadBias) {
  auto data = train_data();
  data.train.clear();
  EXPECT_THROW(train(tiny_config(), data), std::invalid_argument);

  const auto dir = temp_dir("bad_bias");
  BiasSpec spec;
  const auto wrong = TripletStats::from_counts({{{0, 0, 1}, 3}}, LabelSpace::make_default(2, 9));
  write_json_file(dir / "bias.json", bias_to_json(compute_bias(spec, wrong), spec, spec.a));
  auto c = tiny_config();
  c.bias_path = (dir / "bias.json").string();
  EXPECT_THROW(train(c, train_data()), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST(Train, DeterministicCheckpoints) {
  for (auto model : {ModelKind::Linear, ModelKind::DTrans}) {
    const auto c = tiny_config(model);
    const auto a = train(c, train_data());
    const auto b = train(c, train_data());
    EXPECT_EQ(a.log.losses, b.log.losses);
    EXPECT_EQ(to_json(a.checkpoint).dump(), to_json(b.checkpoint).dump());
    for (double l : a.log.losses) EXPECT_TRUE(std::isfinite(l));
    auto other = c;
    other.seed = 6;
    EXPECT_NE(to_json(train(other, train_data()).checkpoint).dump(), to_json(a.checkpoint).dump());
  }
}

TEST(Train, SingleLinearStepMatchesHandGradient) {
  auto c = tiny_config();
  c.optimizer.iterations = 1;
  c.optimizer.batch_size = 1;
  c.background_ratio = 0.0;
  c.loss.kind = LossKind::CE;
  auto data = train_data();
  data.train.resize(1);
  const auto& image = data.train[0];
  ASSERT_FALSE(image.gt.empty());

  const auto initial = std::get<LinearModel>(init_model(c, data.labels));
  const auto pairs = directed_pairs(image.num_objects());
  const auto labels = input_labels(image, Task::PredCls);
  const Matrix x = linear_head_features(initial.config, image, labels, pairs);

  // dL/dW[i][c] = sum over gt instances of x[p][i] * (softmax - onehot)[c] / n
  const auto slots = static_cast<std::size_t>(data.labels.num_relation_slots());
  Matrix gw(x.cols(), slots);
  Matrix gb(1, slots);
  const double n = static_cast<double>(image.gt.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int r = image.relation_of(pairs[p].first, pairs[p].second);
    if (r == 0) continue;
    std::vector<double> z(slots);
    for (std::size_t col = 0; col < slots; ++col) {
      double acc = initial.params.head.bias(0, col);
      for (std::size_t i = 0; i < x.cols(); ++i) acc += x(p, i) * initial.params.head.weight(i, col);
      z[col] = acc;
    }
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    for (std::size_t col = 0; col < slots; ++col) {
      const double g = (std::exp(z[col] - m) / sum - (static_cast<int>(col) == r ? 1.0 : 0.0)) / n;
      gb(0, col) += g;
      for (std::size_t i = 0; i < x.cols(); ++i) gw(i, col) += x(p, i) * g;
    }
  }
  const auto trained = std::get<LinearModel>(train(c, data).checkpoint.model);
  const double lr = c.optimizer.learning_rate;
  for (std::size_t i = 0; i < gw.rows(); ++i)
    for (std::size_t col = 0; col < slots; ++col)
      EXPECT_NEAR(trained.params.head.weight(i, col), initial.params.head.weight(i, col) - lr * gw(i, col), 1e-15);
  for (std::size_t col = 0; col < slots; ++col)
    EXPECT_NEAR(trained.params.head.bias(0, col), initial.params.head.bias(0, col) - lr * gb(0, col), 1e-15);
}

TEST(Train, ZeroExponentBiasMatchesCe) {
  auto c = tiny_config(ModelKind::DTrans);
  c.optimizer.iterations = 15;
  c.loss.kind = LossKind::CE;
  const auto plain = train(c, train_data());
  c.loss.kind = LossKind::RTPB;
  BiasSpec b;
  b.a = 0.0;
  c.bias = b;
  const auto biased = train(c, train_data());
  ASSERT_EQ(plain.log.losses.size(), biased.log.losses.size());
  for (std::size_t i = 0; i < plain.log.losses.size(); ++i)
    EXPECT_NEAR(plain.log.losses[i], biased.log.losses[i], 1e-12) << i;
}

TEST(Train, LdamEqualsIndicatorBiasTrajectory) {
  auto c = tiny_config();
  c.loss.kind = LossKind::Ldam;
  const auto data = train_data();
  const auto ldam = train(c, data);
  auto counts = training_class_counts(data.train, c.background_ratio);
  counts.resize(static_cast<std::size_t>(data.labels.num_relation_slots()), 0);
  const auto spec = make_baseline(c.loss, counts);
  const RelationLoss via_bias = [&](std::span<const double> z, int y, int, int) {
    return rtpb_ce(z, ldam_indicator_bias(spec, y), y);
  };
  const auto indicator = train(c, data, via_bias);
  ASSERT_EQ(ldam.log.losses.size(), indicator.log.losses.size());
  for (std::size_t i = 0; i < ldam.log.losses.size(); ++i) EXPECT_NEAR(ldam.log.losses[i], indicator.log.losses[i], 1e-12);
}

TEST(Train, EveryLossAndSgcls) {
  for (auto kind : {LossKind::CE, LossKind::RTPB, LossKind::Reweight, LossKind::ClassBalanced, LossKind::Focal,
                    LossKind::Ldam}) {
    auto c = tiny_config();
    c.optimizer.iterations = 5;
    c.loss.kind = kind;
    EXPECT_NO_THROW(train(c, train_data())) << to_string(kind);
  }
  auto c = tiny_config(ModelKind::DTrans);
  c.task = Task::SGCls;
  c.optimizer.iterations = 5;
  BiasSpec pb;
  pb.kind = BiasKind::PB;
  c.bias = pb;
  const auto result = train(c, train_data());
  EXPECT_EQ(result.checkpoint.task, Task::SGCls);
}

TEST(Train, RunLogEchoesConfig) {
  auto c = tiny_config();
  c.optimizer.iterations = 200;
  c.validate_every = 100;
  const auto result = train(c, train_data());
  EXPECT_EQ(result.log.losses.size(), 200u);
  EXPECT_EQ(result.log.validation.size(), 2u);
  EXPECT_EQ(result.log.wall_clock_ms.size(), 2u);
  const auto j = to_json(result.log);
  EXPECT_EQ(train_config_from_json(j.at("config")), c);
  EXPECT_EQ(j.at("version"), kVersion);
}

TEST(Train, ClassCountsIncludeBackgroundQuota) {
  const auto& images = tiny_data().train;
  const auto counts = training_class_counts(images, 3.0);
  std::uint64_t fg = 0;
  for (std::size_t r = 1; r < counts.size(); ++r) fg += counts[r];
  std::uint64_t gt = 0;
  for (const auto& img : images) gt += img.gt.size();
  EXPECT_EQ(fg, gt);
  EXPECT_GT(counts[0], 0u);
}

TEST(Checkpoint, JsonRoundTrip) {
  for (auto model : {ModelKind::Linear, ModelKind::DTrans}) {
    const auto result = train(tiny_config(model), train_data());
    const auto j = to_json(result.checkpoint);
    EXPECT_EQ(j.at("format"), "rtpb-checkpoint");
    const auto back = checkpoint_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
    auto broken = j;
    broken["parameters"].erase(broken["parameters"].begin());
    EXPECT_THROW(checkpoint_from_json(broken), std::invalid_argument);
  }
}

TEST(Evaluate, ConstantBiasAndRepeatability) {
  const auto result = train(tiny_config(ModelKind::DTrans), train_data());
  const auto& test = tiny_data().test;
  EvalOptions opts;
  const auto plain = metrics_csv(evaluate(result.checkpoint, test, opts));
  EXPECT_EQ(plain.substr(0, plain.find('\n')), "mode,constraint,k,R,mR");
  EXPECT_EQ(metrics_csv(evaluate(result.checkpoint, test, opts)), plain);
  opts.threads = 4;
  EXPECT_EQ(metrics_csv(evaluate(result.checkpoint, test, opts)), plain);
  opts.threads = 1;
  opts.inference_bias = BiasVector{std::vector<double>(6, 2.5)};
  EXPECT_EQ(metrics_csv(evaluate(result.checkpoint, test, opts)), plain);
  opts.inference_bias = BiasVector{std::vector<double>(4, 2.5)};
  EXPECT_THROW(evaluate(result.checkpoint, test, opts), std::invalid_argument);
}

TEST(Evaluate, ParallelMatchesSequentialExactly) {
  const auto result = train(tiny_config(), train_data());
  EvalOptions seq;
  EvalOptions par;
  par.threads = 3;
  const auto a = evaluate(result.checkpoint, tiny_data().test, seq);
  const auto b = evaluate(result.checkpoint, tiny_data().test, par);
  for (int k : seq.ks) {
    EXPECT_EQ(a.with.recall_at.at(k), b.with.recall_at.at(k));
    EXPECT_EQ(a.without.mean_recall_at.at(k), b.without.mean_recall_at.at(k));
  }
}

TEST(Evaluate, PerfectOracle) {
  // union feature = 10 * onehot(relation slot); the head copies it into the logits
  const int num_relations = 3;
  const auto labels = LabelSpace::make_default(2, num_relations);
  std::vector<SceneImage> split;
  Rng rng(1);
  for (int i = 0; i < 3; ++i) {
    SceneImage img;
    const int n = 3;
    for (int k = 0; k < n; ++k) {
      ObjectProposal p;
      p.box = {0.1, 0.1, 0.5, 0.5};
      p.visual_feature.assign(num_relations + 1, 0.0);
      p.label = k % 2;
      p.detector_scores = {0.5, 0.5};
      img.proposals.push_back(p);
    }
    for (const auto& pair : directed_pairs(n)) {
      const int r = static_cast<int>(rng.below(num_relations + 1));
      std::vector<double> u(num_relations + 1, 0.0);
      u[static_cast<std::size_t>(r)] = 10.0;
      img.union_features[pair] = u;
      if (r > 0) img.gt.push_back({pair.first, pair.second, r});
    }
    split.push_back(img);
  }
  LinearModel m;
  m.config.d_v = num_relations + 1;
  m.config.num_object_classes = 2;
  m.config.num_relation_slots = num_relations + 1;
  m.params.head.weight = Matrix(m.config.input_width(), static_cast<std::size_t>(num_relations + 1));
  m.params.head.bias = Matrix(1, static_cast<std::size_t>(num_relations + 1));
  for (int r = 0; r <= num_relations; ++r) m.params.head.weight(static_cast<std::size_t>(r), static_cast<std::size_t>(r)) = 1.0;
  Checkpoint ckpt;
  ckpt.labels = labels;
  ckpt.model = m;
  const auto report = evaluate(ckpt, split, EvalOptions{});
  for (int k : {20, 50, 100}) {
    EXPECT_EQ(report.with.recall_at.at(k), 1.0);
    EXPECT_EQ(report.with.mean_recall_at.at(k), 1.0);
  }
}

TEST(Sweep, GridRowsAndBounds) {
  auto c = tiny_config();
  const auto data = train_data();
  const auto result = train(c, data);
  const auto stats = TripletStats::ingest(class_triplets(data.train), data.labels);
  const BiasSpec spec;
  const auto& test = tiny_data().test;

  const std::vector<double> zero = {0.0};
  const auto rows = sweep_ae(result.checkpoint, spec, stats, zero, test, EvalOptions{});
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(metrics_csv(rows[0].report), metrics_csv(evaluate(result.checkpoint, test, EvalOptions{})));

  const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  const auto five = sweep_ae(result.checkpoint, spec, stats, grid, test, EvalOptions{});
  EXPECT_EQ(five.size(), 5u);
  const auto csv = sweep_csv(five);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "a_e,R@20,mR@20,R@50,mR@50,R@100,mR@100");

  const std::vector<double> over = {0.5, 1.5};
  EXPECT_THROW(sweep_ae(result.checkpoint, spec, stats, over, test, EvalOptions{}), std::invalid_argument);
}

TEST(DatasetFiles, LoadTrainDataAndManifest) {
  const auto dir = temp_dir("harness_io");
  write_dataset(dir, tiny_synth(), tiny_data());
  auto c = tiny_config();
  c.dataset = dir.string();
  const auto data = load_train_data(c);
  EXPECT_EQ(data.train.size(), 40u);
  EXPECT_TRUE(data.val.empty());
  c.validate_every = 10;
  EXPECT_EQ(load_train_data(c).val.size(), 6u);
  c.train_split = "absent";
  EXPECT_THROW(load_train_data(c), std::runtime_error);

  write_file(dir / "run" / "a.txt", "hello");
  write_manifest(dir / "run", "test", {"a.txt"});
  const auto manifest = read_json_file(dir / "run" / "manifest.json");
  EXPECT_EQ(manifest.at("files").at(0).at("bytes"), 5);
  EXPECT_EQ(manifest.at("command"), "test");
  std::filesystem::remove_all(dir);
}

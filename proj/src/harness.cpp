// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>
#include <thread>

#include "rtpb/dataset_io.hpp"
#include "rtpb/rng.hpp"
#include "rtpb/synth.hpp"

namespace rtpb {

using nlohmann::json;

std::string to_string(ModelKind kind) { return kind == ModelKind::DTrans ? "dtrans" : "linear"; }

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "dtrans") return ModelKind::DTrans;
  if (name == "linear") return ModelKind::Linear;
  throw std::invalid_argument("unknown model '" + name + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (optimizer.iterations < 1) fail("iterations must be >= 1");
  if (optimizer.batch_size < 1) fail("batch_size must be >= 1");
  if (!(optimizer.learning_rate > 0.0) || !std::isfinite(optimizer.learning_rate)) fail("learning_rate must be > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) fail("momentum must be in [0, 1)");
  if (eval_ks.empty()) fail("eval_ks must be nonempty");
  for (std::size_t i = 0; i < eval_ks.size(); ++i) {
    if (eval_ks[i] < 1 || (i > 0 && eval_ks[i] <= eval_ks[i - 1])) fail("eval_ks must be ascending and >= 1");
  }
  if (!(background_ratio >= 0.0) || !std::isfinite(background_ratio)) fail("background_ratio must be >= 0");
  if (!(object_loss_weight >= 0.0)) fail("object_loss_weight must be >= 0");
  if (validate_every < 0) fail("validate_every must be >= 0");
  if ((bias || !bias_path.empty()) && loss.kind != LossKind::RTPB) fail("a bias needs loss kind rtpb");
  if (bias) bias->validate();
}

json to_json(const TrainConfig& c) {
  json j;
  j["task"] = to_string(c.task);
  j["model"] = to_string(c.model);
  j["dtrans"] = to_json(c.dtrans);
  j["loss"] = to_json(c.loss);
  j["bias"] = c.bias ? to_json(*c.bias) : json(nullptr);
  j["bias_path"] = c.bias_path;
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"momentum", c.optimizer.momentum},
                    {"iterations", c.optimizer.iterations},
                    {"batch_size", c.optimizer.batch_size}};
  j["background_ratio"] = c.background_ratio;
  j["object_loss_weight"] = c.object_loss_weight;
  j["seed"] = c.seed;
  j["dataset"] = c.dataset;
  j["train_split"] = c.train_split;
  j["val_split"] = c.val_split;
  j["validate_every"] = c.validate_every;
  j["eval_ks"] = c.eval_ks;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "task",   "model", "dtrans",  "loss",        "bias",      "bias_path",      "optimizer", "background_ratio",
      "object_loss_weight", "seed", "dataset", "train_split", "val_split", "validate_every", "eval_ks"};
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("train config: unknown field '" + key + "'");
  }
  TrainConfig c;
  if (j.contains("task")) c.task = task_from_string(j["task"].get<std::string>());
  if (j.contains("model")) c.model = model_kind_from_string(j["model"].get<std::string>());
  if (j.contains("dtrans")) c.dtrans = dtrans_config_from_json(j["dtrans"]);
  if (j.contains("loss")) c.loss = loss_spec_from_json(j["loss"]);
  if (j.contains("bias") && !j["bias"].is_null()) c.bias = bias_spec_from_json(j["bias"]);
  c.bias_path = j.value("bias_path", c.bias_path);
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.learning_rate = o.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.momentum = o.value("momentum", c.optimizer.momentum);
    c.optimizer.iterations = o.value("iterations", c.optimizer.iterations);
    c.optimizer.batch_size = o.value("batch_size", c.optimizer.batch_size);
  }
  c.background_ratio = j.value("background_ratio", c.background_ratio);
  c.object_loss_weight = j.value("object_loss_weight", c.object_loss_weight);
  c.seed = j.value("seed", c.seed);
  c.dataset = j.value("dataset", c.dataset);
  c.train_split = j.value("train_split", c.train_split);
  c.val_split = j.value("val_split", c.val_split);
  c.validate_every = j.value("validate_every", c.validate_every);
  if (j.contains("eval_ks")) c.eval_ks = j["eval_ks"].get<std::vector<int>>();
  return c;
}

// ---- models ----

Model init_model(const TrainConfig& config, const LabelSpace& labels) {
  const std::uint64_t init_seed = substream_seed(config.seed, 0);
  if (config.model == ModelKind::DTrans) {
    DTransConfig c = config.dtrans;
    c.num_object_classes = labels.num_object_classes();
    c.num_relation_slots = labels.num_relation_slots();
    return DTransModel{c, init_dtrans(c, init_seed)};
  }
  LinearHeadConfig c;
  c.d_v = config.dtrans.d_v;
  c.num_object_classes = labels.num_object_classes();
  c.num_relation_slots = labels.num_relation_slots();
  return LinearModel{c, init_linear_head(c, init_seed)};
}

SceneOutput predict(const Model& model, const SceneImage& image, Task task) {
  return std::visit(
      [&](const auto& m) {
        typename std::decay_t<decltype(m)>::Cache cache;
        return forward(m.config, m.params, image, task, cache);
      },
      model);
}

namespace {

template <typename P>
json params_to_json(const P& params) {
  json out = json::array();
  visit_params(params, "", [&](const std::string& name, const Matrix& m) {
    out.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"data", std::vector<double>(m.flat().begin(), m.flat().end())}});
  });
  return out;
}

template <typename P>
void params_from_json(P& params, const json& j) {
  std::map<std::string, const json*> by_name;
  for (const auto& entry : j) by_name[entry.at("name").get<std::string>()] = &entry;
  std::size_t used = 0;
  visit_params(params, "", [&](const std::string& name, Matrix& m) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("checkpoint: missing parameter " + name);
    const auto& e = *it->second;
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    const auto data = e.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols() || data.size() != m.size()) {
      throw std::invalid_argument("checkpoint: shape mismatch for " + name);
    }
    std::copy(data.begin(), data.end(), m.flat().begin());
    ++used;
  });
  if (used != by_name.size()) throw std::invalid_argument("checkpoint: unexpected parameters");
}

}  // namespace

json to_json(const Checkpoint& c) {
  json j;
  j["format"] = "rtpb-checkpoint";
  j["version"] = kVersion;
  j["task"] = to_string(c.task);
  j["labels"] = to_json(c.labels);
  j["seed"] = c.seed;
  j["iterations"] = c.iterations;
  j["train_config"] = c.train_config;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        j["model"] = {{"kind", std::is_same_v<M, DTransModel> ? "dtrans" : "linear"}, {"config", to_json(m.config)}};
        j["parameters"] = params_to_json(m.params);
      },
      c.model);
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", std::string()) != "rtpb-checkpoint") throw std::invalid_argument("not an rtpb checkpoint");
  Checkpoint c;
  c.task = task_from_string(j.at("task").get<std::string>());
  c.labels = label_space_from_json(j.at("labels"));
  c.seed = j.at("seed").get<std::uint64_t>();
  c.iterations = j.at("iterations").get<int>();
  c.train_config = j.value("train_config", json::object());
  const auto kind = model_kind_from_string(j.at("model").at("kind").get<std::string>());
  const auto& config = j.at("model").at("config");
  if (kind == ModelKind::DTrans) {
    DTransModel m{dtrans_config_from_json(config), {}};
    m.params = init_dtrans(m.config, 0);
    params_from_json(m.params, j.at("parameters"));
    c.model = std::move(m);
  } else {
    LinearModel m{linear_head_config_from_json(config), {}};
    m.params = init_linear_head(m.config, 0);
    params_from_json(m.params, j.at("parameters"));
    c.model = std::move(m);
  }
  const int slots = std::visit([](const auto& m) { return m.config.num_relation_slots; }, c.model);
  const int classes = std::visit([](const auto& m) { return m.config.num_object_classes; }, c.model);
  if (slots != c.labels.num_relation_slots() || classes != c.labels.num_object_classes()) {
    throw std::invalid_argument("checkpoint: model does not match its label space");
  }
  return c;
}

TrainData load_train_data(const TrainConfig& config) {
  TrainData data;
  data.labels = read_labels(config.dataset);
  data.train = read_split(config.dataset, config.train_split);
  if (config.validate_every > 0) data.val = read_split(config.dataset, config.val_split);
  return data;
}

json to_json(const RunLog& log) {
  json j;
  j["version"] = log.version;
  j["config"] = log.config;
  j["losses"] = log.losses;
  j["validation"] = json::array();
  for (const auto& v : log.validation) {
    json results = json::array();
    for (const auto& r : v.results) {
      json rec = {{"mode", to_string(r.mode)}, {"constraint", to_string(r.constraint)}, {"num_images", r.num_images}};
      for (int k : r.ks) {
        rec["R@" + std::to_string(k)] = r.recall_at.at(k);
        rec["mR@" + std::to_string(k)] = r.mean_recall_at.at(k);
      }
      results.push_back(rec);
    }
    j["validation"].push_back({{"iteration", v.iteration}, {"results", results}});
  }
  j["wall_clock_ms"] = json::array();
  for (const auto& [it, ms] : log.wall_clock_ms) j["wall_clock_ms"].push_back({{"iteration", it}, {"ms", ms}});
  return j;
}

// ---- training ----

namespace {

std::size_t background_quota(std::size_t foreground, std::size_t background, double ratio) {
  // Images without foreground still contribute ratio background pairs.
  const double want = std::round(ratio * static_cast<double>(std::max<std::size_t>(foreground, 1)));
  return std::min(background, static_cast<std::size_t>(want));
}

void check_bias_fits(const Bias& bias, const LabelSpace& labels) {
  const auto slots = static_cast<std::size_t>(labels.num_relation_slots());
  const auto bad = [] { return std::invalid_argument("bias does not match the label space"); };
  if (const auto* v = std::get_if<BiasVector>(&bias)) {
    if (v->size() != slots) throw bad();
    return;
  }
  const auto& table = std::get<PairBiasTable>(bias);
  if (table.fallback.size() != slots) throw bad();
  for (const auto& [pair, vec] : table.entries) {
    if (pair.first < 0 || pair.second < 0 || pair.first >= labels.num_object_classes() ||
        pair.second >= labels.num_object_classes() || vec.size() != slots) {
      throw bad();
    }
  }
}

}  // namespace

std::vector<std::uint64_t> training_class_counts(const std::vector<SceneImage>& images, double background_ratio) {
  std::vector<std::uint64_t> counts;
  for (const auto& image : images) {
    for (const auto& t : image.gt) {
      const auto r = static_cast<std::size_t>(t.relation);
      if (counts.size() <= r) counts.resize(r + 1, 0);
      counts[r] += 1;
    }
    const std::size_t pairs = static_cast<std::size_t>(image.num_objects()) * (image.num_objects() - 1);
    if (counts.empty()) counts.resize(1, 0);
    counts[0] += background_quota(image.gt.size(), pairs - image.gt.size(), background_ratio);
  }
  return counts;
}

std::optional<Bias> training_bias(const TrainConfig& config, const TrainData& data) {
  if (config.loss.kind != LossKind::RTPB) return std::nullopt;
  Bias bias;
  if (!config.bias_path.empty()) {
    bias = bias_from_json(read_json_file(config.bias_path));
  } else {
    const auto triplets = class_triplets(data.train);
    const auto stats = TripletStats::ingest(triplets, data.labels);
    bias = compute_bias(config.bias.value_or(BiasSpec{}), stats);
  }
  check_bias_fits(bias, data.labels);
  return bias;
}

RelationLoss make_relation_loss(const TrainConfig& config, const TrainData& data) {
  switch (config.loss.kind) {
    case LossKind::CE:
      return [](std::span<const double> z, int y, int, int) { return ce(z, y); };
    case LossKind::RTPB: {
      auto bias = std::make_shared<const Bias>(*training_bias(config, data));
      return [bias](std::span<const double> z, int y, int s, int o) { return rtpb_ce(z, bias_for_pair(*bias, s, o), y); };
    }
    default: {
      auto counts = training_class_counts(data.train, config.background_ratio);
      counts.resize(static_cast<std::size_t>(data.labels.num_relation_slots()), 0);
      auto spec = std::make_shared<const BaselineSpec>(make_baseline(config.loss, std::move(counts)));
      return [spec](std::span<const double> z, int y, int, int) { return baseline_loss(*spec, z, y); };
    }
  }
}

namespace {

struct PendingImage {
  std::size_t index = 0;
  SceneOutput output;
  std::vector<std::pair<std::size_t, int>> instances;  // (pair index, target slot)
};

template <typename M>
TrainResult train_model(M model, const TrainConfig& config, const TrainData& data, const RelationLoss& relation_loss) {
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  };
  constexpr bool kObjectHead = std::is_same_v<M, DTransModel>;
  const bool object_loss = kObjectHead && config.task == Task::SGCls && config.object_loss_weight > 0.0;

  Rng order_rng(substream_seed(config.seed, 1));
  Rng background_rng(substream_seed(config.seed, 2));
  std::vector<std::size_t> order(data.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(std::span<std::size_t>(order));
  std::size_t cursor = 0;

  auto velocity = zeros_like_params(model.params);
  RunLog log;
  log.config = to_json(config);

  for (int it = 0; it < config.optimizer.iterations; ++it) {
    std::vector<PendingImage> batch;
    std::vector<typename M::Cache> caches;
    std::size_t relation_instances = 0;
    std::size_t objects = 0;
    for (int b = 0; b < config.optimizer.batch_size; ++b) {
      if (cursor == order.size()) {
        order_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const auto& image = data.train[order[cursor]];
      PendingImage pending;
      pending.index = order[cursor++];
      caches.emplace_back();
      pending.output = forward(model.config, model.params, image, config.task, caches.back());
      std::vector<std::size_t> background;
      for (std::size_t p = 0; p < pending.output.pairs.size(); ++p) {
        const auto [s, o] = pending.output.pairs[p];
        const int r = image.relation_of(s, o);
        if (r > 0) {
          pending.instances.emplace_back(p, r);
        } else {
          background.push_back(p);
        }
      }
      background_rng.shuffle(std::span<std::size_t>(background));
      background.resize(background_quota(pending.instances.size(), background.size(), config.background_ratio));
      std::sort(background.begin(), background.end());
      for (std::size_t p : background) pending.instances.emplace_back(p, 0);
      std::sort(pending.instances.begin(), pending.instances.end());
      relation_instances += pending.instances.size();
      objects += image.proposals.size();
      batch.push_back(std::move(pending));
    }

    auto grads = zeros_like_params(model.params);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& pending = batch[b];
      const auto& image = data.train[pending.index];
      const auto& out = pending.output;
      Matrix d_rel(out.relation_logits.rows(), out.relation_logits.cols());
      for (const auto& [p, target] : pending.instances) {
        const auto [s, o] = out.pairs[p];
        const auto res = relation_loss(out.relation_logits.row(p), target,
                                       out.input_labels[static_cast<std::size_t>(s)],
                                       out.input_labels[static_cast<std::size_t>(o)]);
        const double scale = 1.0 / static_cast<double>(relation_instances);
        loss += res.value * scale;
        auto row = d_rel.row(p);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = res.grad_logits[c] * scale;
      }
      Matrix d_obj;
      if (object_loss) {
        d_obj = Matrix(out.object_logits.rows(), out.object_logits.cols());
        const double scale = config.object_loss_weight / static_cast<double>(objects);
        for (std::size_t i = 0; i < image.proposals.size(); ++i) {
          const auto res = ce(out.object_logits.row(i), image.proposals[i].label);
          loss += res.value * scale;
          auto row = d_obj.row(i);
          for (std::size_t c = 0; c < row.size(); ++c) row[c] = res.grad_logits[c] * scale;
        }
      }
      backward(model.config, model.params, caches[b], d_obj, d_rel, grads);
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss at iteration " + std::to_string(it));
    sgd_step(model.params, grads, velocity, config.optimizer.learning_rate, config.optimizer.momentum);
    log.losses.push_back(loss);

    const int done = it + 1;
    if (done % 100 == 0 || done == config.optimizer.iterations) log.wall_clock_ms.emplace_back(done, elapsed_ms());
    if (config.validate_every > 0 && done % config.validate_every == 0 && !data.val.empty()) {
      EvalOptions options;
      options.ks = config.eval_ks;
      const auto report = evaluate(Model{model}, config.task, data.labels.num_relations(), data.val, options);
      log.validation.push_back({done, {report.with, report.without}});
    }
  }

  TrainResult result;
  result.checkpoint.task = config.task;
  result.checkpoint.labels = data.labels;
  result.checkpoint.seed = config.seed;
  result.checkpoint.iterations = config.optimizer.iterations;
  result.checkpoint.train_config = to_json(config);
  result.checkpoint.model = std::move(model);
  result.log = std::move(log);
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainData& data) {
  config.validate();
  if (data.train.empty()) throw std::invalid_argument("training split is empty");
  return train(config, data, make_relation_loss(config, data));
}

TrainResult train(const TrainConfig& config, const TrainData& data, const RelationLoss& relation_loss) {
  config.validate();
  data.labels.validate();
  if (data.train.empty()) throw std::invalid_argument("training split is empty");
  auto model = init_model(config, data.labels);
  return std::visit([&](auto m) { return train_model(std::move(m), config, data, relation_loss); }, std::move(model));
}

// ---- evaluation ----

namespace {

struct ImagePair {
  ImageScore with;
  ImageScore without;
};

ImagePair evaluate_image(const Model& model, Task task, const SceneImage& image, const EvalOptions& options) {
  const SceneOutput out = predict(model, image, task);
  Matrix logits = out.relation_logits;
  if (options.inference_bias) {
    std::vector<int> labels = out.input_labels;
    if (task == Task::SGCls) {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto row = out.object_probs.row(i);
        labels[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
    }
    for (std::size_t p = 0; p < out.pairs.size(); ++p) {
      const auto& b = bias_for_pair(*options.inference_bias, labels[static_cast<std::size_t>(out.pairs[p].first)],
                                    labels[static_cast<std::size_t>(out.pairs[p].second)]);
      const auto shifted = apply_bias(logits.row(p), b);
      std::copy(shifted.begin(), shifted.end(), logits.row(p).begin());
    }
  }
  const auto candidates = score_triplets(out.object_probs, logits, out.pairs, task, out.input_labels);
  const auto gt = gt_triplets(image);
  return {score_image(gt, rank(candidates, Constraint::With), options.ks),
          score_image(gt, rank(candidates, Constraint::Without), options.ks)};
}

}  // namespace

EvalReport evaluate(const Model& model, Task task, int num_relations, const std::vector<SceneImage>& split,
                    const EvalOptions& options) {
  if (options.ks.empty()) throw std::invalid_argument("evaluate: no k values");
  std::vector<ImagePair> scores(split.size());
  const auto threads = static_cast<std::size_t>(std::max(1, options.threads));
  if (threads == 1 || split.size() < 2) {
    for (std::size_t i = 0; i < split.size(); ++i) scores[i] = evaluate_image(model, task, split[i], options);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < split.size(); i += threads) scores[i] = evaluate_image(model, task, split[i], options);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::vector<ImageScore> with;
  std::vector<ImageScore> without;
  for (auto& s : scores) {
    with.push_back(std::move(s.with));
    without.push_back(std::move(s.without));
  }
  return {aggregate(with, options.ks, num_relations, task, Constraint::With),
          aggregate(without, options.ks, num_relations, task, Constraint::Without)};
}

EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<SceneImage>& split, const EvalOptions& options) {
  if (options.inference_bias) check_bias_fits(*options.inference_bias, checkpoint.labels);
  return evaluate(checkpoint.model, checkpoint.task, checkpoint.labels.num_relations(), split, options);
}

std::string metrics_csv(const EvalReport& report) {
  const EvalResult results[] = {report.with, report.without};
  return metrics_csv(std::span<const EvalResult>(results));
}

std::vector<SweepRow> sweep_ae(const Checkpoint& checkpoint, const BiasSpec& spec, const TripletStats& stats,
                               std::span<const double> grid, const std::vector<SceneImage>& split,
                               const EvalOptions& options) {
  for (double a_e : grid) {
    if (!(a_e >= 0.0 && a_e <= spec.a)) {
      throw std::invalid_argument("a_e = " + std::to_string(a_e) + " outside [0, a]");
    }
  }
  std::vector<SweepRow> rows;
  for (double a_e : grid) {
    BiasSpec soft = spec;
    soft.a_eval = a_e;
    EvalOptions with_bias = options;
    with_bias.inference_bias = soft_bias(soft, stats);
    rows.push_back({a_e, evaluate(checkpoint, split, with_bias)});
  }
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "a_e";
  if (!rows.empty()) {
    for (int k : rows.front().report.with.ks) out += ",R@" + std::to_string(k) + ",mR@" + std::to_string(k);
  }
  out += "\n";
  char buf[64];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%.6g", row.a_e);
    out += buf;
    for (int k : row.report.with.ks) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f", row.report.with.recall_at.at(k), row.report.with.mean_recall_at.at(k));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const std::vector<std::string>& files) {
  json listed = json::array();
  for (const auto& f : files) listed.push_back({{"path", f}, {"bytes", std::filesystem::file_size(dir / f)}});
  write_json_file(dir / "manifest.json", {{"command", command}, {"version", kVersion}, {"files", listed}});
}

}  // namespace rtpb

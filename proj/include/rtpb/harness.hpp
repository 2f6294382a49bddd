// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rtpb/bias.hpp"
#include "rtpb/dtrans.hpp"
#include "rtpb/linear_model.hpp"
#include "rtpb/loss.hpp"
#include "rtpb/metrics.hpp"
#include "rtpb/scene.hpp"
#include "rtpb/stats.hpp"

namespace rtpb {

inline constexpr const char* kVersion = "rtpb 0.1.0";

enum class ModelKind { DTrans, Linear };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int iterations = 18000;
  int batch_size = 16;

  bool operator==(const OptimizerConfig&) const = default;
};

struct TrainConfig {
  Task task = Task::PredCls;
  ModelKind model = ModelKind::DTrans;
  DTransConfig dtrans;  // class counts are taken from the dataset labels
  LossSpec loss;
  /// Used only by the rtpb loss; a missing spec there means the CB defaults.
  std::optional<BiasSpec> bias;
  /// Precomputed bias file (bias subcommand output); wins over `bias`.
  std::string bias_path;
  OptimizerConfig optimizer;
  double background_ratio = 3.0;  // sampled background pairs per foreground pair
  double object_loss_weight = 1.0;  // SGCls object CE, DTrans only
  std::uint64_t seed = 1;
  std::string dataset;
  std::string train_split = "train";
  std::string val_split = "val";
  int validate_every = 0;  // 0 disables periodic validation
  std::vector<int> eval_ks = {20, 50, 100};

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct DTransModel {
  using Config = DTransConfig;
  using Params = DTransParameters;
  using Cache = DTransCache;
  Config config;
  Params params;
};

struct LinearModel {
  using Config = LinearHeadConfig;
  using Params = LinearHeadParameters;
  using Cache = LinearHeadCache;
  Config config;
  Params params;
};

using Model = std::variant<DTransModel, LinearModel>;

Model init_model(const TrainConfig& config, const LabelSpace& labels);
SceneOutput predict(const Model& model, const SceneImage& image, Task task);

struct Checkpoint {
  Task task = Task::PredCls;
  LabelSpace labels;
  Model model;
  std::uint64_t seed = 0;
  int iterations = 0;
  nlohmann::json train_config;
};

nlohmann::json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

struct TrainData {
  LabelSpace labels;
  std::vector<SceneImage> train;
  std::vector<SceneImage> val;
};

/// Reads labels.json and the train (and, if present, val) split.
TrainData load_train_data(const TrainConfig& config);

struct ValidationRecord {
  int iteration = 0;
  std::vector<EvalResult> results;
};

struct RunLog {
  std::vector<double> losses;  // one per iteration
  std::vector<ValidationRecord> validation;
  std::vector<std::pair<int, double>> wall_clock_ms;  // (iteration, elapsed)
  nlohmann::json config;
  std::string version = kVersion;
};

nlohmann::json to_json(const RunLog& log);

/// Loss on one relation instance: logits row, target slot, pair labels.
using RelationLoss =
    std::function<LossOutput(std::span<const double> logits, int label, int subject_label, int object_label)>;

/// [background, r = 1..L_r] instance counts of the training stream: every
/// foreground pair plus the expected number of sampled background pairs.
std::vector<std::uint64_t> training_class_counts(const std::vector<SceneImage>& images, double background_ratio);

/// The bias the rtpb loss trains with; nullopt for every other loss.
std::optional<Bias> training_bias(const TrainConfig& config, const TrainData& data);

RelationLoss make_relation_loss(const TrainConfig& config, const TrainData& data);

struct TrainResult {
  Checkpoint checkpoint;
  RunLog log;
};

/// Seeded SGD with momentum. Throws std::invalid_argument for an empty
/// training split or a bias that does not fit the label space.
TrainResult train(const TrainConfig& config, const TrainData& data);
TrainResult train(const TrainConfig& config, const TrainData& data, const RelationLoss& relation_loss);

/// v <- momentum v + g; w <- w - lr v.
template <typename P>
void sgd_step(P& params, const P& grads, P& velocity, double learning_rate, double momentum) {
  std::vector<Matrix*> w;
  std::vector<Matrix*> v;
  visit_params(params, "", [&](const std::string&, Matrix& m) { w.push_back(&m); });
  visit_params(velocity, "", [&](const std::string&, Matrix& m) { v.push_back(&m); });
  std::size_t i = 0;
  visit_params(grads, "", [&](const std::string&, const Matrix& g) {
    auto wf = w[i]->flat();
    auto vf = v[i]->flat();
    const auto gf = g.flat();
    for (std::size_t k = 0; k < gf.size(); ++k) {
      vf[k] = momentum * vf[k] + gf[k];
      wf[k] -= learning_rate * vf[k];
    }
    ++i;
  });
}

struct EvalOptions {
  std::vector<int> ks = {20, 50, 100};
  std::optional<Bias> inference_bias;
  int threads = 1;
};

struct EvalReport {
  EvalResult with;
  EvalResult without;
};

EvalReport evaluate(const Model& model, Task task, int num_relations, const std::vector<SceneImage>& split,
                    const EvalOptions& options);
EvalReport evaluate(const Checkpoint& checkpoint, const std::vector<SceneImage>& split, const EvalOptions& options);

std::string metrics_csv(const EvalReport& report);

struct SweepRow {
  double a_e = 0.0;
  EvalReport report;
};

/// One evaluation per a_e with the soft bias of `spec` at exponent a_e.
/// Throws std::invalid_argument for a_e outside [0, spec.a].
std::vector<SweepRow> sweep_ae(const Checkpoint& checkpoint, const BiasSpec& spec, const TripletStats& stats,
                               std::span<const double> grid, const std::vector<SceneImage>& split,
                               const EvalOptions& options);

/// "a_e,R@k,mR@k,..." per grid point, graph-constrained.
std::string sweep_csv(std::span<const SweepRow> rows);

/// manifest.json listing `files` (relative to dir) with byte sizes.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const std::vector<std::string>& files);

}  // namespace rtpb

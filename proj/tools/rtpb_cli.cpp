// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

// rtpb command line: synth, stats, bias, train, eval, sweep, gradcheck.
// Every subcommand reads an optional --config JSON, applies flag
// overrides on top, and writes its artifacts plus manifest.json under --out.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rtpb/bias.hpp"
#include "rtpb/certify.hpp"
#include "rtpb/dataset_io.hpp"
#include "rtpb/harness.hpp"
#include "rtpb/stats.hpp"
#include "rtpb/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rtpb;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  auto j = read_json_file(path);
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object: " + path);
  return j;
}

template <typename T>
void override(json& j, const std::string& key, const std::optional<T>& value) {
  if (value) j[key] = *value;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

struct Common {
  std::string config;
  std::string out;
};

void add_common(CLI::App* app, Common& c, const std::string& default_out) {
  app->add_option("--config", c.config, "JSON config file");
  c.out = default_out;
  app->add_option("--out", c.out, "run directory")->capture_default_str();
}

json result_json(const EvalResult& r) {
  json j = {{"mode", to_string(r.mode)}, {"constraint", to_string(r.constraint)}, {"num_images", r.num_images}};
  for (int k : r.ks) {
    j["R@" + std::to_string(k)] = r.recall_at.at(k);
    j["mR@" + std::to_string(k)] = r.mean_recall_at.at(k);
  }
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rtpb: resistance-biased relation training on synthetic scene graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // synth
  Common synth_c;
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_train, synth_val, synth_test;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_c, "runs/dataset");
  synth->add_option("--seed", synth_seed);
  synth->add_option("--train-images", synth_train);
  synth->add_option("--val-images", synth_val);
  synth->add_option("--test-images", synth_test);

  // stats
  Common stats_c;
  std::optional<std::string> stats_dataset, stats_split;
  auto* stats = app.add_subcommand("stats", "count triplets of a split");
  add_common(stats, stats_c, "runs/stats");
  stats->add_option("--dataset", stats_dataset);
  stats->add_option("--split", stats_split);

  // bias
  Common bias_c;
  std::optional<std::string> bias_stats, bias_dataset, bias_kind;
  std::optional<double> bias_a, bias_eps, bias_a_eval;
  bool bias_soft = false;
  auto* bias = app.add_subcommand("bias", "compute a resistance bias from triplet statistics");
  add_common(bias, bias_c, "runs/bias");
  bias->add_option("--stats", bias_stats, "stats.json from the stats subcommand");
  bias->add_option("--dataset", bias_dataset, "dataset directory (train split is counted)");
  bias->add_option("--kind", bias_kind, "cb | vb | pb | eb");
  bias->add_option("--a", bias_a);
  bias->add_option("--epsilon", bias_eps);
  bias->add_option("--a-eval", bias_a_eval);
  bias->add_flag("--soft", bias_soft, "emit the soft bias at a_eval");

  // train
  Common train_c;
  std::optional<std::string> train_dataset, train_loss, train_model, train_task, train_bias_kind;
  std::optional<std::uint64_t> train_seed;
  std::optional<int> train_iters, train_batch;
  std::optional<double> train_lr, train_a;
  auto* train_cmd = app.add_subcommand("train", "train a relation model");
  add_common(train_cmd, train_c, "runs/train");
  train_cmd->add_option("--dataset", train_dataset);
  train_cmd->add_option("--loss", train_loss, "ce | rtpb | reweight | class_balanced | focal | ldam");
  train_cmd->add_option("--model", train_model, "dtrans | linear");
  train_cmd->add_option("--task", train_task, "predcls | sgcls");
  train_cmd->add_option("--bias-kind", train_bias_kind);
  train_cmd->add_option("--a", train_a);
  train_cmd->add_option("--seed", train_seed);
  train_cmd->add_option("--iterations", train_iters);
  train_cmd->add_option("--batch-size", train_batch);
  train_cmd->add_option("--lr", train_lr);

  // eval
  Common eval_c;
  std::optional<std::string> eval_ckpt, eval_dataset, eval_split, eval_bias;
  std::optional<std::vector<int>> eval_ks;
  std::optional<int> eval_threads;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_c, "runs/eval");
  eval->add_option("--checkpoint", eval_ckpt);
  eval->add_option("--dataset", eval_dataset);
  eval->add_option("--split", eval_split);
  eval->add_option("--bias", eval_bias, "bias.json subtracted at inference");
  eval->add_option("--ks", eval_ks)->delimiter(',');
  eval->add_option("--threads", eval_threads);

  // sweep
  Common sweep_c;
  std::optional<std::string> sweep_ckpt, sweep_dataset, sweep_split, sweep_kind;
  std::optional<std::vector<double>> sweep_grid;
  std::optional<double> sweep_a;
  std::optional<int> sweep_threads;
  auto* sweep = app.add_subcommand("sweep", "evaluate under soft inference bias for a grid of a_e");
  add_common(sweep, sweep_c, "runs/sweep");
  sweep->add_option("--checkpoint", sweep_ckpt);
  sweep->add_option("--dataset", sweep_dataset);
  sweep->add_option("--split", sweep_split);
  sweep->add_option("--kind", sweep_kind);
  sweep->add_option("--a", sweep_a);
  sweep->add_option("--grid", sweep_grid)->delimiter(',');
  sweep->add_option("--threads", sweep_threads);

  // gradcheck
  Common gc_c;
  std::optional<int> gc_instances;
  std::optional<std::uint64_t> gc_seed;
  std::optional<std::vector<std::string>> gc_checks;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference certification of all gradients");
  add_common(gradcheck, gc_c, "runs/gradcheck");
  gradcheck->add_option("--instances", gc_instances);
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--checks", gc_checks)->delimiter(',');

  std::string command = "rtpb";
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      command = "synth";
      json j = load_config(synth_c.config);
      override(j, "seed", synth_seed);
      override(j, "train_images", synth_train);
      override(j, "val_images", synth_val);
      override(j, "test_images", synth_test);
      const auto config = synth_config_from_json(j);
      const auto data = generate(config);
      const fs::path out = synth_c.out;
      write_dataset(out, config, data);
      write_manifest(out, command, {"train.jsonl", "val.jsonl", "test.jsonl", "labels.json", "synth_config.json"});
      print({{"out", out.string()},
             {"train", data.train.size()},
             {"val", data.val.size()},
             {"test", data.test.size()}});
    } else if (stats->parsed()) {
      command = "stats";
      json j = load_config(stats_c.config);
      override(j, "dataset", stats_dataset);
      override(j, "split", stats_split);
      const std::string dir = j.value("dataset", std::string());
      const std::string split = j.value("split", std::string("train"));
      const auto labels = read_labels(dir);
      const auto counts = TripletStats::ingest(class_triplets(read_split(dir, split)), labels);
      const fs::path out = stats_c.out;
      write_json_file(out / "stats.json", to_json(counts));
      const auto m = counts.marginal_counts();
      print({{"out", out.string()},
             {"total", counts.total()},
             {"relation_counts", m.relation_counts},
             {"valid_pair_counts", m.valid_pair_counts}});
      write_manifest(out, command, {"stats.json"});
    } else if (bias->parsed()) {
      command = "bias";
      json j = load_config(bias_c.config);
      json spec_json = j.value("spec", json::object());
      override(spec_json, "kind", bias_kind);
      override(spec_json, "a", bias_a);
      override(spec_json, "epsilon", bias_eps);
      override(spec_json, "a_eval", bias_a_eval);
      override(j, "stats", bias_stats);
      override(j, "dataset", bias_dataset);
      const auto spec = bias_spec_from_json(spec_json);
      const bool soft = bias_soft || j.value("soft", false);
      auto counts = [&] {
        if (j.contains("stats")) return stats_from_json(read_json_file(j["stats"].get<std::string>()));
        if (!j.contains("dataset")) throw std::invalid_argument("bias needs --stats or --dataset");
        const std::string dir = j["dataset"].get<std::string>();
        return TripletStats::ingest(class_triplets(read_split(dir, j.value("split", std::string("train")))),
                                    read_labels(dir));
      }();
      const auto b = soft ? soft_bias(spec, counts) : compute_bias(spec, counts);
      const fs::path out = bias_c.out;
      write_json_file(out / "bias.json", bias_to_json(b, spec, soft ? spec.a_eval : spec.a));
      write_manifest(out, command, {"bias.json"});
      print({{"out", out.string()}, {"kind", to_string(spec.kind)}, {"soft", soft}});
    } else if (train_cmd->parsed()) {
      command = "train";
      json j = load_config(train_c.config);
      override(j, "dataset", train_dataset);
      override(j, "model", train_model);
      override(j, "task", train_task);
      override(j, "seed", train_seed);
      if (train_loss) j["loss"]["kind"] = *train_loss;
      if (train_iters) j["optimizer"]["iterations"] = *train_iters;
      if (train_batch) j["optimizer"]["batch_size"] = *train_batch;
      if (train_lr) j["optimizer"]["learning_rate"] = *train_lr;
      if (train_bias_kind) j["bias"]["kind"] = *train_bias_kind;
      if (train_a) j["bias"]["a"] = *train_a;
      const auto config = train_config_from_json(j);
      config.validate();
      const auto data = load_train_data(config);
      const auto result = train(config, data);
      const fs::path out = train_c.out;
      write_json_file(out / "config.json", to_json(config));
      write_json_file(out / "checkpoint.json", to_json(result.checkpoint));
      write_json_file(out / "runlog.json", to_json(result.log));
      write_manifest(out, command, {"config.json", "checkpoint.json", "runlog.json"});
      print({{"out", out.string()},
             {"iterations", config.optimizer.iterations},
             {"final_loss", result.log.losses.back()}});
    } else if (eval->parsed()) {
      command = "eval";
      json j = load_config(eval_c.config);
      override(j, "checkpoint", eval_ckpt);
      override(j, "dataset", eval_dataset);
      override(j, "split", eval_split);
      override(j, "bias", eval_bias);
      override(j, "ks", eval_ks);
      override(j, "threads", eval_threads);
      const auto checkpoint = checkpoint_from_json(read_json_file(j.value("checkpoint", std::string())));
      const std::string dir = j.value("dataset", std::string());
      const std::string split_name = j.value("split", std::string("test"));
      const auto split = read_split(dir, split_name);
      EvalOptions options;
      if (j.contains("ks")) options.ks = j["ks"].get<std::vector<int>>();
      options.threads = j.value("threads", 1);
      if (j.contains("bias") && !j["bias"].is_null()) {
        options.inference_bias = bias_from_json(read_json_file(j["bias"].get<std::string>()));
      }
      const auto report = evaluate(checkpoint, split, options);
      const fs::path out = eval_c.out;
      write_file(out / "metrics.csv", metrics_csv(report));
      write_file(out / "per_relation_with.csv", per_relation_csv(report.with, checkpoint.labels));
      write_file(out / "per_relation_without.csv", per_relation_csv(report.without, checkpoint.labels));
      write_manifest(out, command, {"metrics.csv", "per_relation_with.csv", "per_relation_without.csv"});
      print({{"out", out.string()}, {"split", split_name}, {"results", {result_json(report.with), result_json(report.without)}}});
    } else if (sweep->parsed()) {
      command = "sweep";
      json j = load_config(sweep_c.config);
      override(j, "checkpoint", sweep_ckpt);
      override(j, "dataset", sweep_dataset);
      override(j, "split", sweep_split);
      override(j, "grid", sweep_grid);
      override(j, "threads", sweep_threads);
      json spec_json = j.value("bias", json::object());
      override(spec_json, "kind", sweep_kind);
      override(spec_json, "a", sweep_a);
      const auto spec = bias_spec_from_json(spec_json);
      const auto checkpoint = checkpoint_from_json(read_json_file(j.value("checkpoint", std::string())));
      const std::string dir = j.value("dataset", std::string());
      const auto counts = TripletStats::ingest(
          class_triplets(read_split(dir, j.value("stats_split", std::string("train")))), checkpoint.labels);
      const auto split = read_split(dir, j.value("split", std::string("test")));
      const auto grid = j.value("grid", std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
      EvalOptions options;
      if (j.contains("ks")) options.ks = j["ks"].get<std::vector<int>>();
      options.threads = j.value("threads", 1);
      const auto rows = sweep_ae(checkpoint, spec, counts, grid, split, options);
      const fs::path out = sweep_c.out;
      write_file(out / "sweep.csv", sweep_csv(rows));
      write_manifest(out, command, {"sweep.csv"});
      std::cout << sweep_csv(rows);
    } else if (gradcheck->parsed()) {
      command = "gradcheck";
      json j = load_config(gc_c.config);
      override(j, "instances", gc_instances);
      override(j, "seed", gc_seed);
      override(j, "checks", gc_checks);
      CertifyOptions options;
      options.instances = j.value("instances", options.instances);
      options.seed = j.value("seed", options.seed);
      options.step = j.value("step", options.step);
      options.tol = j.value("tol", options.tol);
      options.model_tol = j.value("model_tol", options.model_tol);
      options.model_coordinates = j.value("model_coordinates", options.model_coordinates);
      const auto outcomes = certify_gradients(options, j.value("checks", std::vector<std::string>{}));
      json report = json::array();
      bool ok = true;
      for (const auto& o : outcomes) {
        report.push_back(to_json(o));
        ok = ok && o.passed();
      }
      const fs::path out = gc_c.out;
      write_json_file(out / "gradcheck.json", report);
      write_manifest(out, command, {"gradcheck.json"});
      print(report);
      if (!ok) {
        std::cerr << json{{"error", "gradient check failed"}, {"command", command}}.dump() << "\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"command", command}}.dump() << "\n";
    return 1;
  }
  return 0;
}

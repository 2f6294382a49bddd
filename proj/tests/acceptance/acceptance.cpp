// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

// Acceptance suite: one PASS/FAIL line per criterion; exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rtpb/bias.hpp"
#include "rtpb/certify.hpp"
#include "rtpb/dataset_io.hpp"
#include "rtpb/harness.hpp"
#include "rtpb/loss.hpp"
#include "rtpb/synth.hpp"

namespace fs = std::filesystem;
using namespace rtpb;

namespace {

int failures = 0;
std::map<int, std::string> lines;  // printed in criterion order at the end

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  lines[id] = std::string(ok ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + name + " (" + detail + ")";
  std::fprintf(stderr, "[criterion %d done]\n", id);
  if (!ok) ++failures;
}

void print_lines() {
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Instance {
  std::vector<double> z;
  BiasVector b;
  int y = 0;
};

// dimension 2..64, logits and biases in [-5, 5]
Instance draw(Rng& rng) {
  Instance in;
  const std::size_t n = 2 + rng.below(63);
  for (std::size_t i = 0; i < n; ++i) in.z.push_back(rng.uniform(-5, 5));
  for (std::size_t i = 0; i < n; ++i) in.b.values.push_back(rng.uniform(-5, 5));
  in.y = static_cast<int>(rng.below(n));
  return in;
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  CertifyOptions opts;  // 100 instances per check
  const auto outcomes = certify_gradients(opts);
  bool ok = !outcomes.empty();
  double worst = 0.0;
  int resampled = 0;
  std::string failed;
  for (const auto& o : outcomes) {
    ok = ok && o.passed() && o.instances >= 100;
    worst = std::max(worst, o.max_rel_error / o.tol);
    resampled += o.resampled;
    if (!o.passed()) failed += " " + o.name;
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 120.0;
  report(1, "gradient certification", ok,
         fmt("%zu checks x 100 instances, worst error/tol %.2e, %d kink redraws, %.1f s%s", outcomes.size(), worst,
             resampled, secs, failed.empty() ? "" : (", failed:" + failed).c_str()));
}

void criterion2() {
  Rng rng(substream_seed(2026, 2));
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto in = draw(rng);
    worst = std::max(worst, std::abs(rtpb_ce(in.z, in.b, in.y).value - (ce(in.z, in.y).value + theta(in.z, in.b, in.y))));
  }
  report(2, "decomposition rtpb_ce = ce + theta", worst < 1e-10, fmt("10000 instances, max |diff| %.3e", worst));
}

void criterion3() {
  Rng rng(substream_seed(2026, 3));
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto in = draw(rng);
    BiasVector up = in.b;
    up.values[static_cast<std::size_t>(in.y)] += 1e-3;
    if (!(theta(in.z, up, in.y) > theta(in.z, in.b, in.y))) ++violations;
  }
  report(3, "theta monotone in b_y", violations == 0, fmt("10000 instances, %d violations", violations));
}

void criterion5() {
  Rng rng(substream_seed(2026, 5));
  int wrong = 0;
  double nearest = 1e300;
  const int points = 1000;
  for (int g = 0; g < points; ++g) {
    const BiasVector b{{rng.uniform(-5, 5), rng.uniform(-5, 5)}};
    const double threshold = b.values[0] - b.values[1];
    // gaps spread over [threshold - 2, threshold + 2], clear of the flip by more than the tolerance
    double gap = threshold - 2.0 + 4.0 * (g + 0.5) / points;
    if (std::abs(gap - threshold) <= 1e-9) gap += 2e-9;
    nearest = std::min(nearest, std::abs(gap - threshold));
    const std::vector<double> z = {gap, 0.0};
    const auto adj = apply_bias(z, b);
    const int arg = adj[0] > adj[1] ? 0 : 1;
    if (arg != (gap > threshold ? 0 : 1)) ++wrong;
  }
  // exact flip points within the tolerance band
  int band_wrong = 0;
  for (double eps : {1e-9, 1e-7, 1e-5}) {
    const BiasVector b{{0.7, -0.4}};
    const double t = 1.1;
    const std::vector<double> above = {t + eps + 1e-12, 0.0};
    const std::vector<double> below = {t - eps - 1e-12, 0.0};
    auto a1 = apply_bias(above, b);
    auto a2 = apply_bias(below, b);
    if (!(a1[0] > a1[1]) || !(a2[0] < a2[1])) ++band_wrong;
  }
  report(5, "margin tilt flips at b_i - b_j", wrong == 0 && band_wrong == 0,
         fmt("%d grid points, %d misplaced, closest gap %.1e, tolerance 1e-9", points, wrong + band_wrong, nearest));
}

void criterion6() {
  Rng rng(substream_seed(2026, 6));
  double worst_v = 0.0, worst_g = 0.0;
  for (int i = 0; i < 1000; ++i) {
    auto in = draw(rng);
    BaselineSpec spec;
    spec.kind = BaselineKind::Ldam;
    spec.margin_c = 0.5;
    for (std::size_t c = 0; c < in.z.size(); ++c) spec.class_counts.push_back(1 + rng.below(100000));
    const auto l = baseline_loss(spec, in.z, in.y);
    const auto r = rtpb_ce(in.z, ldam_indicator_bias(spec, in.y), in.y);
    worst_v = std::max(worst_v, std::abs(l.value - r.value));
    for (std::size_t c = 0; c < in.z.size(); ++c) worst_g = std::max(worst_g, std::abs(l.grad_logits[c] - r.grad_logits[c]));
  }
  report(6, "LDAM equals rtpb_ce with indicator bias", worst_v <= 1e-12 && worst_g <= 1e-12,
         fmt("1000 instances, max value diff %.2e, max grad diff %.2e", worst_v, worst_g));
}

void criterion7() {
  const auto stats = TripletStats::from_counts({{{0, 0, 1}, 90}, {{0, 0, 2}, 10}}, LabelSpace::make_default(1, 2));
  BiasSpec spec;
  spec.kind = BiasKind::CB;
  spec.a = 1.0;
  spec.epsilon = 0.0;
  const auto b = std::get<BiasVector>(compute_bias(spec, stats));
  // -log(0.9), -log(0.1)
  const double e0 = std::abs(b.values[1] - 0.105360515657826301227500980839);
  const double e1 = std::abs(b.values[2] - 2.30258509299404568401799145468);
  report(7, "CB bias on counts [90,10]", e0 <= 1e-12 && e1 <= 1e-12,
         fmt("[%.15f, %.15f], errors %.1e %.1e", b.values[1], b.values[2], e0, e1));
}

// ---- desk-scale experiment (criteria 4, 8, 9, 10) ----

struct Run {
  TrainResult ce_run;
  TrainResult rtpb_run;
  EvalReport ce_eval;
  EvalReport rtpb_eval;
  std::vector<std::string> files;  // relative to the run directory
  double seconds = 0.0;
};

TrainConfig experiment_config(const fs::path& dataset, LossKind kind) {
  TrainConfig c;
  c.task = Task::PredCls;
  c.model = ModelKind::DTrans;
  c.loss.kind = kind;
  if (kind == LossKind::RTPB) {
    BiasSpec b;
    b.kind = BiasKind::CB;
    b.a = 1.0;
    b.epsilon = 1e-3;
    c.bias = b;
  }
  c.optimizer.iterations = 2000;
  c.optimizer.batch_size = 8;
  c.optimizer.learning_rate = 0.01;
  c.seed = 1;
  c.dataset = dataset.string();
  return c;
}

Run run_experiment(const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  Run run;
  const SynthConfig synth;  // L_e 20, L_r 30, zipf 1.5, 2000 / 500 images, seed 7
  const auto data_dir = dir / "data";
  write_dataset(data_dir, synth, generate(synth));
  for (const char* f : {"data/train.jsonl", "data/val.jsonl", "data/test.jsonl", "data/labels.json",
                        "data/synth_config.json"})
    run.files.push_back(f);

  const auto test = read_split(data_dir, "test");
  auto one = [&](LossKind kind, const std::string& name, TrainResult& result, EvalReport& eval) {
    const auto config = experiment_config(data_dir, kind);
    result = train(config, load_train_data(config));
    write_json_file(dir / name / "checkpoint.json", to_json(result.checkpoint));
    // evaluate what was written, not the in-memory model
    const auto ckpt = checkpoint_from_json(read_json_file(dir / name / "checkpoint.json"));
    eval = evaluate(ckpt, test, EvalOptions{});
    write_file(dir / name / "metrics.csv", metrics_csv(eval));
    write_file(dir / name / "per_relation_with.csv", per_relation_csv(eval.with, ckpt.labels));
    run.files.push_back(name + "/checkpoint.json");
    run.files.push_back(name + "/metrics.csv");
    run.files.push_back(name + "/per_relation_with.csv");
  };
  one(LossKind::CE, "ce", run.ce_run, run.ce_eval);
  one(LossKind::RTPB, "rtpb_cb", run.rtpb_run, run.rtpb_eval);
  run.seconds = seconds_since(t0);
  return run;
}

void criterion4(const fs::path& dataset, const TrainResult& ce_run) {
  auto c = experiment_config(dataset, LossKind::RTPB);
  BiasSpec b;
  b.a = 0.0;
  b.epsilon = 1e-3;
  c.bias = b;
  const auto biased = train(c, load_train_data(c));
  const auto& x = ce_run.log.losses;
  const auto& y = biased.log.losses;
  double worst = x.size() == y.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  report(4, "a = 0 bias reproduces the unbiased run", worst <= 1e-12,
         fmt("%zu iterations, max per-iteration loss diff %.2e", y.size(), worst));
}

void criterion8(const Run& run) {
  const double r_ce = run.ce_eval.with.recall_at.at(50);
  const double mr_ce = run.ce_eval.with.mean_recall_at.at(50);
  const double r_b = run.rtpb_eval.with.recall_at.at(50);
  const double mr_b = run.rtpb_eval.with.mean_recall_at.at(50);
  const double mr_ratio = mr_b / mr_ce;
  const double r_ratio = r_b / r_ce;
  const bool ok = mr_ratio >= 1.10 && r_ratio >= 0.85 && r_ratio <= 1.0 && run.seconds < 300.0;
  report(8, "head-tail trade-off, rtpb(CB) vs ce", ok,
         fmt("mR@50 %.4f -> %.4f (x%.3f, need >= 1.10), R@50 %.4f -> %.4f (x%.3f, need [0.85, 1.0]), %.1f s", mr_ce,
             mr_b, mr_ratio, r_ce, r_b, r_ratio, run.seconds));
}

void criterion9(const fs::path& dir) {
  const auto ckpt = checkpoint_from_json(read_json_file(dir / "rtpb_cb" / "checkpoint.json"));
  const auto config = train_config_from_json(ckpt.train_config);
  const auto data = load_train_data(config);
  const auto stats = TripletStats::ingest(class_triplets(data.train), data.labels);
  const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  const auto rows = sweep_ae(ckpt, config.bias.value(), stats, grid, read_split(config.dataset, "test"), EvalOptions{});
  std::vector<double> mr, r;
  for (const auto& row : rows) {
    mr.push_back(row.report.with.mean_recall_at.at(50));
    r.push_back(row.report.with.recall_at.at(50));
  }
  const bool mr_ok = *std::max_element(mr.begin(), mr.end()) == mr.front() &&
                     *std::min_element(mr.begin(), mr.end()) == mr.back();
  const bool r_ok = *std::min_element(r.begin(), r.end()) == r.front() &&
                    *std::max_element(r.begin(), r.end()) == r.back();
  std::string detail = "a_e:mR@50/R@50";
  for (std::size_t i = 0; i < grid.size(); ++i) detail += fmt(" %.2f:%.4f/%.4f", grid[i], mr[i], r[i]);
  report(9, "soft-bias sweep direction", mr_ok && r_ok, detail);
}

// Reruns the whole experiment in the same directory and compares bytes
// against the snapshot taken after the first run.
void criterion10(const fs::path& dir, const Run& first) {
  std::vector<std::string> snapshot;
  for (const auto& f : first.files) snapshot.push_back(read_file(dir / f));
  fs::remove_all(dir);
  const Run second = run_experiment(dir);
  std::vector<std::string> differing;
  for (std::size_t i = 0; i < first.files.size(); ++i) {
    const auto& f = first.files[i];
    if (!fs::exists(dir / f) || read_file(dir / f) != snapshot[i]) differing.push_back(f);
  }
  bool header_ok = true;
  for (const char* name : {"ce", "rtpb_cb"}) {
    const auto csv = read_file(dir / name / "metrics.csv");
    header_ok = header_ok && csv.substr(0, csv.find('\n')) == "mode,constraint,k,R,mR";
  }
  const bool losses_ok = first.rtpb_run.log.losses == second.rtpb_run.log.losses &&
                         first.ce_run.log.losses == second.ce_run.log.losses;
  std::string detail = fmt("%zu files compared, %zu differ", first.files.size(), differing.size());
  for (const auto& f : differing) detail += " " + f;
  detail += header_ok ? ", header exact" : ", header mismatch";
  detail += losses_ok ? ", losses identical" : ", losses differ";
  report(10, "end-to-end determinism and CSV schema", differing.empty() && header_ok && losses_ok, detail);
}

}  // namespace

int main() {
  const auto root = fs::temp_directory_path() / "rtpb_acceptance";
  fs::remove_all(root);
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion5();
    criterion6();
    criterion7();

    const auto run_a = root / "run_a";
    const Run run = run_experiment(run_a);
    criterion4(run_a / "data", run.ce_run);
    criterion8(run);
    criterion9(run_a);
    criterion10(run_a, run);
  } catch (const std::exception& e) {
    print_lines();
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  print_lines();
  if (failures == 0) fs::remove_all(root);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}

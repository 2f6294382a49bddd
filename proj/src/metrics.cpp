// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "rtpb/loss.hpp"

namespace rtpb {

std::string to_string(Constraint c) { return c == Constraint::With ? "with" : "without"; }

std::vector<TripletPrediction> score_triplets(const Matrix& object_probs, const Matrix& relation_logits,
                                              std::span<const ObjectPair> pairs, Task mode,
                                              std::span<const int> given_labels) {
  if (relation_logits.rows() != pairs.size()) throw std::invalid_argument("score_triplets: one logit row per pair");
  if (mode == Task::PredCls && object_probs.empty() && given_labels.empty()) {
    throw std::invalid_argument("score_triplets: PredCls needs object labels or probabilities");
  }
  // PredCls may pass labels alone; probabilities are ignored there anyway.
  const std::size_t n = object_probs.empty() ? given_labels.size() : object_probs.rows();
  if (!given_labels.empty() && given_labels.size() != n) {
    throw std::invalid_argument("score_triplets: one label per object");
  }
  std::vector<int> labels(n, 0);
  std::vector<double> confidence(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (object_probs.empty()) {
      labels[i] = given_labels[i];
      continue;
    }
    const auto row = object_probs.row(i);
    const auto best = std::max_element(row.begin(), row.end());
    if (mode == Task::SGCls) {
      labels[i] = static_cast<int>(best - row.begin());
      confidence[i] = *best;
    } else if (!given_labels.empty()) {
      labels[i] = given_labels[i];
    } else {
      labels[i] = static_cast<int>(best - row.begin());
    }
  }
  std::vector<TripletPrediction> out;
  out.reserve(pairs.size() * (relation_logits.cols() - 1));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, o] = pairs[p];
    if (s < 0 || o < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(o) >= n) {
      throw std::invalid_argument("score_triplets: pair index out of range");
    }
    const auto probs = softmax(relation_logits.row(p));
    const double pair_conf = confidence[static_cast<std::size_t>(s)] * confidence[static_cast<std::size_t>(o)];
    for (std::size_t r = 1; r < probs.size(); ++r) {
      out.push_back(TripletPrediction{s, o, static_cast<int>(r), pair_conf * probs[r],
                                      labels[static_cast<std::size_t>(s)], labels[static_cast<std::size_t>(o)], p});
    }
  }
  return out;
}

namespace {

bool ranks_before(const TripletPrediction& a, const TripletPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.pair_index != b.pair_index) return a.pair_index < b.pair_index;
  return a.relation < b.relation;
}

}  // namespace

std::vector<TripletPrediction> rank(std::vector<TripletPrediction> predictions, Constraint constraint) {
  if (constraint == Constraint::With) {
    std::map<std::size_t, TripletPrediction> best;
    for (const auto& p : predictions) {
      auto [it, inserted] = best.try_emplace(p.pair_index, p);
      if (!inserted && ranks_before(p, it->second)) it->second = p;
    }
    predictions.clear();
    for (auto& [pair, p] : best) predictions.push_back(p);
  }
  std::sort(predictions.begin(), predictions.end(), ranks_before);
  return predictions;
}

std::vector<GtTriplet> gt_triplets(const SceneImage& image) {
  std::vector<GtTriplet> out;
  for (const auto& t : image.gt) {
    out.push_back(GtTriplet{t.subject, t.object, t.relation, image.proposals[static_cast<std::size_t>(t.subject)].label,
                            image.proposals[static_cast<std::size_t>(t.object)].label});
  }
  return out;
}

std::vector<bool> matched_at_k(std::span<const GtTriplet> gt, std::span<const TripletPrediction> ranked, int k) {
  if (k < 1) throw std::invalid_argument("recall cutoff k must be >= 1");
  const std::size_t top = std::min(ranked.size(), static_cast<std::size_t>(k));
  std::vector<bool> matched(gt.size(), false);
  for (std::size_t g = 0; g < gt.size(); ++g) {
    for (std::size_t i = 0; i < top; ++i) {
      const auto& p = ranked[i];
      if (p.subject == gt[g].subject && p.object == gt[g].object && p.relation == gt[g].relation &&
          p.subject_label == gt[g].subject_label && p.object_label == gt[g].object_label) {
        matched[g] = true;
        break;
      }
    }
  }
  return matched;
}

double recall_at_k(std::span<const GtTriplet> gt, std::span<const TripletPrediction> ranked, int k) {
  if (gt.empty()) return 0.0;
  const auto matched = matched_at_k(gt, ranked, k);
  return static_cast<double>(std::count(matched.begin(), matched.end(), true)) / static_cast<double>(gt.size());
}

ImageScore score_image(std::span<const GtTriplet> gt, std::span<const TripletPrediction> ranked,
                       std::span<const int> ks) {
  ImageScore score;
  for (const auto& t : gt) score.gt_relations.push_back(t.relation);
  for (int k : ks) score.matched.push_back(matched_at_k(gt, ranked, k));
  return score;
}

EvalResult aggregate(std::span<const ImageScore> images, std::span<const int> ks, int num_relations, Task mode,
                     Constraint constraint) {
  EvalResult result;
  result.mode = mode;
  result.constraint = constraint;
  result.ks.assign(ks.begin(), ks.end());
  result.num_images = static_cast<int>(images.size());
  const auto num_rel = static_cast<std::size_t>(num_relations);
  result.gt_counts.assign(num_rel, 0);
  for (const auto& image : images)
    for (int r : image.gt_relations) result.gt_counts[static_cast<std::size_t>(r - 1)] += 1;

  for (std::size_t ki = 0; ki < ks.size(); ++ki) {
    double recall_sum = 0.0;
    std::size_t images_with_gt = 0;
    std::vector<std::uint64_t> hits(num_rel, 0);
    for (const auto& image : images) {
      if (image.gt_relations.empty()) continue;
      const auto& matched = image.matched[ki];
      std::size_t found = 0;
      for (std::size_t g = 0; g < matched.size(); ++g) {
        if (!matched[g]) continue;
        ++found;
        hits[static_cast<std::size_t>(image.gt_relations[g] - 1)] += 1;
      }
      recall_sum += static_cast<double>(found) / static_cast<double>(matched.size());
      ++images_with_gt;
    }
    std::vector<double> per_relation(num_rel, std::numeric_limits<double>::quiet_NaN());
    double mean_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t r = 0; r < num_rel; ++r) {
      if (result.gt_counts[r] == 0) continue;
      per_relation[r] = static_cast<double>(hits[r]) / static_cast<double>(result.gt_counts[r]);
      mean_sum += per_relation[r];
      ++present;
    }
    const int k = ks[ki];
    result.recall_at[k] = images_with_gt == 0 ? 0.0 : recall_sum / static_cast<double>(images_with_gt);
    result.mean_recall_at[k] = present == 0 ? 0.0 : mean_sum / static_cast<double>(present);
    result.per_relation_recall[k] = std::move(per_relation);
  }
  return result;
}

namespace {

std::vector<ImageScore> score_all(std::span<const RankedImage> images, int k) {
  const int ks[] = {k};
  std::vector<ImageScore> scores;
  for (const auto& image : images) scores.push_back(score_image(image.gt, image.ranked, ks));
  return scores;
}

}  // namespace

double dataset_recall_at_k(std::span<const RankedImage> images, int k) {
  const int ks[] = {k};
  int max_relation = 1;
  for (const auto& image : images)
    for (const auto& t : image.gt) max_relation = std::max(max_relation, t.relation);
  return aggregate(score_all(images, k), ks, max_relation, Task::PredCls, Constraint::With).recall_at.at(k);
}

std::pair<double, std::vector<double>> mean_recall_at_k(std::span<const RankedImage> images, int k,
                                                        int num_relations) {
  const int ks[] = {k};
  auto result = aggregate(score_all(images, k), ks, num_relations, Task::PredCls, Constraint::With);
  return {result.mean_recall_at.at(k), result.per_relation_recall.at(k)};
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string metrics_csv(std::span<const EvalResult> results) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& r : results) {
    for (int k : r.ks) {
      out += to_string(r.mode) + "," + to_string(r.constraint) + "," + std::to_string(k) + "," +
             fixed6(r.recall_at.at(k)) + "," + fixed6(r.mean_recall_at.at(k)) + "\n";
    }
  }
  return out;
}

std::string per_relation_csv(const EvalResult& result, const LabelSpace& labels) {
  std::string out = "relation,name,gt_count";
  for (int k : result.ks) out += ",recall@" + std::to_string(k);
  out += "\n";
  for (std::size_t r = 0; r < result.gt_counts.size(); ++r) {
    out += std::to_string(r + 1) + "," + labels.relation_names.at(r) + "," + std::to_string(result.gt_counts[r]);
    for (int k : result.ks) {
      const double v = result.per_relation_recall.at(k)[r];
      out += "," + (std::isnan(v) ? std::string("NA") : fixed6(v));
    }
    out += "\n";
  }
  return out;
}

}  // namespace rtpb

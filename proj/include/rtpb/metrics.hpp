// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "rtpb/matrix.hpp"
#include "rtpb/scene.hpp"
#include "rtpb/stats.hpp"

namespace rtpb {

/// WITH keeps one relation per ordered pair before ranking; WITHOUT ranks
/// every (pair, relation) candidate.
enum class Constraint { With, Without };

std::string to_string(Constraint c);

struct TripletPrediction {
  int subject = 0;
  int object = 0;
  int relation = 0;  // 1..L_r
  double score = 0.0;
  int subject_label = 0;
  int object_label = 0;
  std::size_t pair_index = 0;
};

/// One candidate per (pair, foreground relation) with score
/// p_s * p_o * softmax(logits)[r]. PredCls uses p_s = p_o = 1 and
/// `given_labels`; SGCls takes label and probability from the argmax of
/// each object_probs row.
std::vector<TripletPrediction> score_triplets(const Matrix& object_probs, const Matrix& relation_logits,
                                              std::span<const ObjectPair> pairs, Task mode,
                                              std::span<const int> given_labels = {});

/// Descending score; ties by (pair index, relation) ascending.
std::vector<TripletPrediction> rank(std::vector<TripletPrediction> predictions, Constraint constraint);

struct GtTriplet {
  int subject = 0;
  int object = 0;
  int relation = 0;
  int subject_label = 0;
  int object_label = 0;
};

std::vector<GtTriplet> gt_triplets(const SceneImage& image);

/// Per gt triplet, whether the top-k ranked predictions contain it (same
/// subject, object, relation and object labels).
std::vector<bool> matched_at_k(std::span<const GtTriplet> gt, std::span<const TripletPrediction> ranked, int k);

/// Fraction of one image's gt found in the top k; 0 for an image without gt.
double recall_at_k(std::span<const GtTriplet> gt, std::span<const TripletPrediction> ranked, int k);

/// Per-image outcome kept for order-independent aggregation.
struct ImageScore {
  std::vector<int> gt_relations;
  std::vector<std::vector<bool>> matched;  // [k index][gt index]
};

ImageScore score_image(std::span<const GtTriplet> gt, std::span<const TripletPrediction> ranked,
                       std::span<const int> ks);

struct EvalResult {
  Task mode = Task::PredCls;
  Constraint constraint = Constraint::With;
  std::vector<int> ks;
  std::map<int, double> recall_at;
  std::map<int, double> mean_recall_at;
  /// [r - 1]; NaN for relations without gt in the split.
  std::map<int, std::vector<double>> per_relation_recall;
  std::vector<std::uint64_t> gt_counts;  // [r - 1]
  int num_images = 0;
};

/// R@k averages image recall over images with gt; mR@k pools each
/// relation's gt across images and averages over relations present.
EvalResult aggregate(std::span<const ImageScore> images, std::span<const int> ks, int num_relations, Task mode,
                     Constraint constraint);

/// Dataset-level helpers over (gt, ranked) per image.
struct RankedImage {
  std::vector<GtTriplet> gt;
  std::vector<TripletPrediction> ranked;
};
double dataset_recall_at_k(std::span<const RankedImage> images, int k);
std::pair<double, std::vector<double>> mean_recall_at_k(std::span<const RankedImage> images, int k, int num_relations);

inline constexpr const char* kMetricsCsvHeader = "mode,constraint,k,R,mR";

/// Rows "mode,constraint,k,R,mR" with six-decimal values.
std::string metrics_csv(std::span<const EvalResult> results);

/// "relation,name,gt_count,recall@k..." for one result; NA where a relation
/// has no gt.
std::string per_relation_csv(const EvalResult& result, const LabelSpace& labels);

}  // namespace rtpb

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <array>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtpb/matrix.hpp"

namespace rtpb {

/// PredCls: boxes and object labels given. SGCls: boxes only.
enum class Task { PredCls, SGCls };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct ObjectProposal {
  std::array<double, 4> box{};  // x1, y1, x2, y2 in [0, 1]
  std::vector<double> visual_feature;
  int label = 0;  // ground-truth class
  std::vector<double> detector_scores;

  /// Argmax of detector_scores, lowest index on ties.
  int detector_label() const;
};

/// Ground-truth relation between proposal indices.
struct PairRelation {
  int subject = 0;
  int object = 0;
  int relation = 0;  // 1..L_r

  auto operator<=>(const PairRelation&) const = default;
};

using ObjectPair = std::pair<int, int>;

struct SceneImage {
  std::vector<ObjectProposal> proposals;
  std::map<ObjectPair, std::vector<double>> union_features;
  std::vector<PairRelation> gt;

  int num_objects() const { return static_cast<int>(proposals.size()); }
  /// Ground-truth relation for an ordered pair, 0 (background) if none.
  int relation_of(int subject, int object) const;
};

/// [x1, y1, x2, y2, w, h, cx, cy].
std::array<double, 8> box_features(const std::array<double, 4>& box);

/// Every ordered pair (s, o) with s != o, subject-major.
std::vector<ObjectPair> directed_pairs(int num_objects);

/// Labels fed to the label embedding and to pairwise bias lookup:
/// ground truth for PredCls, detector argmax for SGCls.
std::vector<int> input_labels(const SceneImage& image, Task task);

/// Union features stacked in `pairs` order. Throws std::invalid_argument on
/// a missing pair.
Matrix union_matrix(const SceneImage& image, const std::vector<ObjectPair>& pairs);

}  // namespace rtpb

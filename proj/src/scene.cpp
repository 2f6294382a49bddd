// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/scene.hpp"

#include <algorithm>
#include <stdexcept>

namespace rtpb {

std::string to_string(Task task) { return task == Task::PredCls ? "predcls" : "sgcls"; }

Task task_from_string(const std::string& name) {
  if (name == "predcls" || name == "PredCls") return Task::PredCls;
  if (name == "sgcls" || name == "SGCls") return Task::SGCls;
  throw std::invalid_argument("unknown task '" + name + "' (expected predcls|sgcls)");
}

int ObjectProposal::detector_label() const {
  if (detector_scores.empty()) throw std::invalid_argument("proposal has no detector scores");
  return static_cast<int>(std::max_element(detector_scores.begin(), detector_scores.end()) - detector_scores.begin());
}

int SceneImage::relation_of(int subject, int object) const {
  for (const auto& t : gt) {
    if (t.subject == subject && t.object == object) return t.relation;
  }
  return 0;
}

std::array<double, 8> box_features(const std::array<double, 4>& box) {
  const double w = box[2] - box[0];
  const double h = box[3] - box[1];
  return {box[0], box[1], box[2], box[3], w, h, box[0] + 0.5 * w, box[1] + 0.5 * h};
}

std::vector<ObjectPair> directed_pairs(int num_objects) {
  std::vector<ObjectPair> pairs;
  if (num_objects > 1) pairs.reserve(static_cast<std::size_t>(num_objects * (num_objects - 1)));
  for (int s = 0; s < num_objects; ++s)
    for (int o = 0; o < num_objects; ++o)
      if (s != o) pairs.emplace_back(s, o);
  return pairs;
}

std::vector<int> input_labels(const SceneImage& image, Task task) {
  std::vector<int> labels;
  labels.reserve(image.proposals.size());
  for (const auto& p : image.proposals) labels.push_back(task == Task::PredCls ? p.label : p.detector_label());
  return labels;
}

Matrix union_matrix(const SceneImage& image, const std::vector<ObjectPair>& pairs) {
  if (pairs.empty()) return {};
  const auto first = image.union_features.find(pairs.front());
  if (first == image.union_features.end()) throw std::invalid_argument("missing union feature");
  Matrix out(pairs.size(), first->second.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto it = image.union_features.find(pairs[i]);
    if (it == image.union_features.end()) {
      throw std::invalid_argument("missing union feature for pair (" + std::to_string(pairs[i].first) + ", " +
                                  std::to_string(pairs[i].second) + ")");
    }
    if (it->second.size() != out.cols()) throw std::invalid_argument("union feature width mismatch");
    std::copy(it->second.begin(), it->second.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace rtpb

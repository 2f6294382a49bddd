// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/stats.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace rtpb {

void LabelSpace::validate() const {
  if (object_names.empty()) throw std::invalid_argument("label space needs at least one object class");
  if (relation_names.empty()) throw std::invalid_argument("label space needs at least one relation");
  const std::set<std::string> objects(object_names.begin(), object_names.end());
  if (objects.size() != object_names.size()) throw std::invalid_argument("duplicate object class name");
  const std::set<std::string> relations(relation_names.begin(), relation_names.end());
  if (relations.size() != relation_names.size()) throw std::invalid_argument("duplicate relation name");
}

LabelSpace LabelSpace::make_default(int num_object_classes, int num_relations) {
  if (num_object_classes < 1 || num_relations < 1) {
    throw std::invalid_argument("label space sizes must be positive");
  }
  LabelSpace labels;
  for (int c = 0; c < num_object_classes; ++c) labels.object_names.push_back("obj_" + std::to_string(c));
  for (int r = 1; r <= num_relations; ++r) labels.relation_names.push_back("rel_" + std::to_string(r));
  return labels;
}

TripletStats::TripletStats(CountMap counts, LabelSpace labels)
    : labels_(std::move(labels)), counts_(std::move(counts)) {
  const auto num_classes = static_cast<std::size_t>(labels_.num_object_classes());
  const auto num_rel = static_cast<std::size_t>(labels_.num_relations());
  marginals_.relation_counts.assign(num_rel, 0);
  marginals_.valid_pair_counts.assign(num_rel, 0);
  subject_side_.assign(num_classes * num_rel, 0);
  object_side_.assign(num_classes * num_rel, 0);
  for (const auto& [key, n] : counts_) {
    const auto r = static_cast<std::size_t>(key.relation - 1);
    total_ += n;
    marginals_.relation_counts[r] += n;
    marginals_.valid_pair_counts[r] += 1;
    subject_side_[static_cast<std::size_t>(key.subject) * num_rel + r] += n;
    object_side_[static_cast<std::size_t>(key.object) * num_rel + r] += n;
  }
}

TripletStats TripletStats::ingest(std::span<const Triplet> records, LabelSpace labels) {
  labels.validate();
  CountMap counts;
  for (std::size_t pos = 0; pos < records.size(); ++pos) {
    const Triplet& t = records[pos];
    if (t.subject < 0 || t.subject >= labels.num_object_classes() || t.object < 0 ||
        t.object >= labels.num_object_classes() || t.relation < 1 || t.relation > labels.num_relations()) {
      throw std::out_of_range("annotation record " + std::to_string(pos) + " out of range: (" +
                              std::to_string(t.subject) + ", " + std::to_string(t.object) + ", " +
                              std::to_string(t.relation) + ")");
    }
    ++counts[t];
  }
  return TripletStats(std::move(counts), std::move(labels));
}

TripletStats TripletStats::from_counts(const CountMap& counts, LabelSpace labels) {
  labels.validate();
  CountMap kept;
  for (const auto& [key, n] : counts) {
    if (key.subject < 0 || key.subject >= labels.num_object_classes() || key.object < 0 ||
        key.object >= labels.num_object_classes() || key.relation < 1 ||
        key.relation > labels.num_relations()) {
      throw std::out_of_range("count key out of range");
    }
    if (n > 0) kept.emplace(key, n);
  }
  return TripletStats(std::move(kept), std::move(labels));
}

void TripletStats::check_pair(int subject, int object) const {
  if (subject < 0 || subject >= labels_.num_object_classes() || object < 0 ||
      object >= labels_.num_object_classes()) {
    throw std::out_of_range("class pair (" + std::to_string(subject) + ", " + std::to_string(object) +
                            ") out of range");
  }
}

std::uint64_t TripletStats::count(int subject, int object, int relation) const {
  const auto it = counts_.find(Triplet{subject, object, relation});
  return it == counts_.end() ? 0 : it->second;
}

std::vector<double> TripletStats::pair_counts(int subject, int object) const {
  check_pair(subject, object);
  std::vector<double> out(static_cast<std::size_t>(labels_.num_relations()), 0.0);
  for (auto it = counts_.lower_bound(Triplet{subject, object, 0});
       it != counts_.end() && it->first.subject == subject && it->first.object == object; ++it) {
    out[static_cast<std::size_t>(it->first.relation - 1)] = static_cast<double>(it->second);
  }
  return out;
}

std::vector<double> TripletStats::sppo_counts(int subject, int object) const {
  check_pair(subject, object);
  const auto num_rel = static_cast<std::size_t>(labels_.num_relations());
  std::vector<double> out(num_rel, 0.0);
  for (std::size_t r = 0; r < num_rel; ++r) {
    const auto sp = subject_side_[static_cast<std::size_t>(subject) * num_rel + r];
    const auto po = object_side_[static_cast<std::size_t>(object) * num_rel + r];
    out[r] = std::sqrt(static_cast<double>(sp) * static_cast<double>(po));
  }
  return out;
}

std::vector<std::pair<int, int>> TripletStats::observed_pairs() const {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [key, n] : counts_) {
    if (pairs.empty() || pairs.back() != std::pair{key.subject, key.object}) {
      pairs.emplace_back(key.subject, key.object);
    }
  }
  return pairs;
}

std::vector<Triplet> read_annotations(std::istream& in) {
  std::vector<Triplet> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back(Triplet{j.at("s").get<int>(), j.at("o").get<int>(), j.at("r").get<int>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("annotation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

nlohmann::json to_json(const LabelSpace& labels) {
  return {{"object_names", labels.object_names}, {"relation_names", labels.relation_names}};
}

LabelSpace label_space_from_json(const nlohmann::json& j) {
  LabelSpace labels;
  labels.object_names = j.at("object_names").get<std::vector<std::string>>();
  labels.relation_names = j.at("relation_names").get<std::vector<std::string>>();
  labels.validate();
  return labels;
}

nlohmann::json to_json(const TripletStats& stats) {
  auto counts = nlohmann::json::array();
  for (const auto& [key, n] : stats.counts()) {
    counts.push_back({key.subject, key.object, key.relation, n});
  }
  return {{"label_space", to_json(stats.label_space())}, {"counts", std::move(counts)}};
}

TripletStats stats_from_json(const nlohmann::json& j) {
  TripletStats::CountMap counts;
  for (const auto& row : j.at("counts")) {
    if (!row.is_array() || row.size() != 4) throw std::invalid_argument("count rows must be [s, o, r, n]");
    counts[Triplet{row[0].get<int>(), row[1].get<int>(), row[2].get<int>()}] += row[3].get<std::uint64_t>();
  }
  return TripletStats::from_counts(counts, label_space_from_json(j.at("label_space")));
}

}  // namespace rtpb

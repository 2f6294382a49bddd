// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace rtpb {

/// Object and relation vocabularies. Relation ids run 1..num_relations;
/// id 0 is the background ("no relation") slot of every logit vector.
struct LabelSpace {
  std::vector<std::string> object_names;
  std::vector<std::string> relation_names;

  int num_object_classes() const { return static_cast<int>(object_names.size()); }
  int num_relations() const { return static_cast<int>(relation_names.size()); }
  /// Logit width: background plus every foreground relation.
  int num_relation_slots() const { return num_relations() + 1; }

  /// Throws std::invalid_argument on empty or duplicate names.
  void validate() const;

  static LabelSpace make_default(int num_object_classes, int num_relations);

  bool operator==(const LabelSpace&) const = default;
};

/// One annotated relationship: subject class, object class, relation id.
struct Triplet {
  int subject = 0;
  int object = 0;
  int relation = 0;

  auto operator<=>(const Triplet&) const = default;
};

struct MarginalCounts {
  std::vector<std::uint64_t> relation_counts;    // [r - 1] = sum_{s,o} n(s,o,r)
  std::vector<std::uint64_t> valid_pair_counts;  // [r - 1] = #{(s,o) : n(s,o,r) > 0}
};

/// Sparse count table n(s, o, r) over foreground annotations.
/// Immutable once built; every query is const and thread-safe.
class TripletStats {
 public:
  using CountMap = std::map<Triplet, std::uint64_t>;

  /// Counts every triplet in `records`. Throws std::out_of_range naming the
  /// zero-based position of the first record outside `labels`.
  static TripletStats ingest(std::span<const Triplet> records, LabelSpace labels);

  /// Rebuilds from explicit counts (zero entries are dropped).
  static TripletStats from_counts(const CountMap& counts, LabelSpace labels);

  const LabelSpace& label_space() const { return labels_; }
  const CountMap& counts() const { return counts_; }
  std::uint64_t total() const { return total_; }
  bool empty() const { return total_ == 0; }

  std::uint64_t count(int subject, int object, int relation) const;

  const MarginalCounts& marginal_counts() const { return marginals_; }

  /// n(s, o, r) for r = 1..L_r, stored at [r - 1].
  std::vector<double> pair_counts(int subject, int object) const;

  /// sqrt(sum_{o'} n(s,o',r) * sum_{s'} n(s',o,r)) at [r - 1].
  std::vector<double> sppo_counts(int subject, int object) const;

  /// Distinct ordered class pairs with at least one annotation, ascending.
  std::vector<std::pair<int, int>> observed_pairs() const;

 private:
  TripletStats(CountMap counts, LabelSpace labels);
  void check_pair(int subject, int object) const;

  LabelSpace labels_;
  CountMap counts_;
  std::uint64_t total_ = 0;
  MarginalCounts marginals_;
  // Dense (class, relation) marginals, row-major L_e x L_r.
  std::vector<std::uint64_t> subject_side_;
  std::vector<std::uint64_t> object_side_;
};

/// Parses one {"s":..,"o":..,"r":..} object per non-blank line.
std::vector<Triplet> read_annotations(std::istream& in);

nlohmann::json to_json(const LabelSpace& labels);
LabelSpace label_space_from_json(const nlohmann::json& j);

/// {"label_space": ..., "counts": [[s, o, r, n], ...]} in ascending key order.
nlohmann::json to_json(const TripletStats& stats);
TripletStats stats_from_json(const nlohmann::json& j);

}  // namespace rtpb

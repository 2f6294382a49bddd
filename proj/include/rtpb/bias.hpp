// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rtpb/stats.hpp"

namespace rtpb {

/// Which training statistic supplies the per-relation weights.
enum class BiasKind {
  CB,  // relation sample counts
  VB,  // number of distinct (s, o) class pairs seen with the relation
  PB,  // per class-pair relation counts
  EB,  // per class-pair sqrt(subject-side x object-side) estimates
};

/// Value placed in the background slot (index 0) of every bias vector.
enum class BackgroundPolicy {
  Uniform,  // -log(1/L_r + eps): the uniform-weight foreground value
  Literal,  // log(1/L_r)
  Fixed,    // BiasSpec::background_value
};

struct BiasSpec {
  BiasKind kind = BiasKind::CB;
  double a = 1.0;         // divergence exponent
  double epsilon = 1e-3;  // floor inside the log
  double a_eval = 0.0;    // exponent of the inference-time soft bias
  BackgroundPolicy background = BackgroundPolicy::Uniform;
  double background_value = 0.0;

  void validate() const;
  bool is_pairwise() const { return kind == BiasKind::PB || kind == BiasKind::EB; }
  bool operator==(const BiasSpec&) const = default;
};

/// Bias over logit slots: [0] background, [r] foreground relation r.
struct BiasVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool operator==(const BiasVector&) const = default;
};

/// Per ordered class-pair biases with a fallback for unseen pairs.
struct PairBiasTable {
  std::map<std::pair<int, int>, BiasVector> entries;
  BiasVector fallback;

  bool operator==(const PairBiasTable&) const = default;
};

using Bias = std::variant<BiasVector, PairBiasTable>;

/// b_i = -log(w_i^a / sum_j w_j^a + eps), with 0^0 = 1.
/// Zero weights with eps = 0 evaluate to +inf; callers building bias
/// vectors reject that. Throws std::invalid_argument for negative or empty
/// weights and for all-zero weights with a > 0 ("degenerate weights").
std::vector<double> weights_to_bias(std::span<const double> weights, double a, double epsilon);

double background_bias(const BiasSpec& spec, int num_relations);

/// Resistance bias built from training statistics with exponent spec.a.
Bias compute_bias(const BiasSpec& spec, const TripletStats& stats);

/// The same construction with exponent spec.a_eval.
Bias soft_bias(const BiasSpec& spec, const TripletStats& stats);

/// Bias with an explicit exponent; compute_bias and soft_bias forward here.
Bias build_bias(const BiasSpec& spec, double exponent, const TripletStats& stats);

const BiasVector& lookup_pair_bias(const PairBiasTable& table, int subject, int object);

/// Bias vector for one pair of class labels, whichever form `bias` has.
const BiasVector& bias_for_pair(const Bias& bias, int subject_label, int object_label);

/// logits - bias. Throws std::invalid_argument on length mismatch.
std::vector<double> apply_bias(std::span<const double> logits, const BiasVector& bias);

/// True when every slot carries the same value (softmax-neutral bias).
bool is_constant(const BiasVector& bias);

std::string to_string(BiasKind kind);
BiasKind bias_kind_from_string(const std::string& name);
std::string to_string(BackgroundPolicy policy);
BackgroundPolicy background_policy_from_string(const std::string& name);

nlohmann::json to_json(const BiasSpec& spec);
BiasSpec bias_spec_from_json(const nlohmann::json& j);

/// Global: {"kind","a","epsilon","background","values"}.
/// Pairwise: {"kind","a","epsilon","background","entries":[[s,o,[...]],...],"fallback":[...]}.
nlohmann::json bias_to_json(const Bias& bias, const BiasSpec& spec, double exponent);
Bias bias_from_json(const nlohmann::json& j);

}  // namespace rtpb

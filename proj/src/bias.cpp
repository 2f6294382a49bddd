// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/bias.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rtpb {

void BiasSpec::validate() const {
  if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("bias exponent a must be finite and >= 0");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("bias epsilon must lie in [0, 1]");
  if (!(a_eval >= 0.0 && a_eval <= a)) throw std::invalid_argument("soft exponent a_eval must lie in [0, a]");
  if (background == BackgroundPolicy::Fixed && !std::isfinite(background_value)) {
    throw std::invalid_argument("fixed background bias must be finite");
  }
}

std::vector<double> weights_to_bias(std::span<const double> weights, double a, double epsilon) {
  if (weights.empty()) throw std::invalid_argument("weights_to_bias: empty weight vector");
  if (!(a >= 0.0)) throw std::invalid_argument("weights_to_bias: a must be >= 0");
  double largest = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights_to_bias: weights must be finite and >= 0");
    largest = std::max(largest, w);
  }
  std::vector<double> powered(weights.size());
  if (a == 0.0) {
    std::fill(powered.begin(), powered.end(), 1.0);
  } else {
    if (largest == 0.0) throw std::invalid_argument("degenerate weights");
    // Dividing by the largest weight keeps w^a representable for large a.
    for (std::size_t i = 0; i < weights.size(); ++i) powered[i] = std::pow(weights[i] / largest, a);
  }
  double total = 0.0;
  for (double p : powered) total += p;
  std::vector<double> bias(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) bias[i] = -std::log(powered[i] / total + epsilon);
  return bias;
}

double background_bias(const BiasSpec& spec, int num_relations) {
  switch (spec.background) {
    case BackgroundPolicy::Uniform:
      return -std::log(1.0 / num_relations + spec.epsilon);
    case BackgroundPolicy::Literal:
      return std::log(1.0 / num_relations);
    case BackgroundPolicy::Fixed:
      return spec.background_value;
  }
  throw std::logic_error("unknown background policy");
}

namespace {

BiasVector assemble(const BiasSpec& spec, std::span<const double> foreground) {
  BiasVector out;
  out.values.reserve(foreground.size() + 1);
  out.values.push_back(background_bias(spec, static_cast<int>(foreground.size())));
  for (std::size_t i = 0; i < foreground.size(); ++i) {
    if (!std::isfinite(foreground[i])) {
      throw std::invalid_argument("non-finite bias for relation " + std::to_string(i + 1) +
                                  ": zero weight with epsilon = 0");
    }
    out.values.push_back(foreground[i]);
  }
  return out;
}

BiasVector from_weights(const BiasSpec& spec, std::span<const double> weights, double exponent) {
  return assemble(spec, weights_to_bias(weights, exponent, spec.epsilon));
}

BiasVector uniform_vector(const BiasSpec& spec, int num_relations) {
  const std::vector<double> ones(static_cast<std::size_t>(num_relations), 1.0);
  return from_weights(spec, ones, 0.0);
}

bool all_zero(std::span<const double> w) {
  return std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; });
}

}  // namespace

Bias build_bias(const BiasSpec& spec, double exponent, const TripletStats& stats) {
  spec.validate();
  const int num_rel = stats.label_space().num_relations();
  const auto& marginals = stats.marginal_counts();
  switch (spec.kind) {
    case BiasKind::CB:
    case BiasKind::VB: {
      const auto& counts = spec.kind == BiasKind::CB ? marginals.relation_counts : marginals.valid_pair_counts;
      const std::vector<double> weights(counts.begin(), counts.end());
      return from_weights(spec, weights, exponent);
    }
    case BiasKind::PB:
    case BiasKind::EB: {
      PairBiasTable table;
      table.fallback = uniform_vector(spec, num_rel);
      if (spec.kind == BiasKind::PB) {
        for (const auto& [s, o] : stats.observed_pairs()) {
          table.entries.emplace(std::pair{s, o}, from_weights(spec, stats.pair_counts(s, o), exponent));
        }
      } else {
        // Estimated counts are nonzero for unseen pairs whose subject and
        // object each occur with a relation, so every class pair is scanned.
        const int num_classes = stats.label_space().num_object_classes();
        for (int s = 0; s < num_classes; ++s) {
          for (int o = 0; o < num_classes; ++o) {
            const auto weights = stats.sppo_counts(s, o);
            if (all_zero(weights)) continue;
            table.entries.emplace(std::pair{s, o}, from_weights(spec, weights, exponent));
          }
        }
      }
      return table;
    }
  }
  throw std::logic_error("unknown bias kind");
}

Bias compute_bias(const BiasSpec& spec, const TripletStats& stats) { return build_bias(spec, spec.a, stats); }

Bias soft_bias(const BiasSpec& spec, const TripletStats& stats) { return build_bias(spec, spec.a_eval, stats); }

const BiasVector& lookup_pair_bias(const PairBiasTable& table, int subject, int object) {
  const auto it = table.entries.find({subject, object});
  return it == table.entries.end() ? table.fallback : it->second;
}

const BiasVector& bias_for_pair(const Bias& bias, int subject_label, int object_label) {
  if (const auto* global = std::get_if<BiasVector>(&bias)) return *global;
  return lookup_pair_bias(std::get<PairBiasTable>(bias), subject_label, object_label);
}

std::vector<double> apply_bias(std::span<const double> logits, const BiasVector& bias) {
  if (logits.size() != bias.size()) {
    throw std::invalid_argument("apply_bias: logits length " + std::to_string(logits.size()) +
                                " != bias length " + std::to_string(bias.size()));
  }
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - bias.values[i];
  return out;
}

bool is_constant(const BiasVector& bias) {
  return std::adjacent_find(bias.values.begin(), bias.values.end(), std::not_equal_to<>()) == bias.values.end();
}

std::string to_string(BiasKind kind) {
  switch (kind) {
    case BiasKind::CB: return "cb";
    case BiasKind::VB: return "vb";
    case BiasKind::PB: return "pb";
    case BiasKind::EB: return "eb";
  }
  return "?";
}

BiasKind bias_kind_from_string(const std::string& name) {
  if (name == "cb") return BiasKind::CB;
  if (name == "vb") return BiasKind::VB;
  if (name == "pb") return BiasKind::PB;
  if (name == "eb") return BiasKind::EB;
  throw std::invalid_argument("unknown bias kind '" + name + "' (expected cb|vb|pb|eb)");
}

std::string to_string(BackgroundPolicy policy) {
  switch (policy) {
    case BackgroundPolicy::Uniform: return "uniform";
    case BackgroundPolicy::Literal: return "literal";
    case BackgroundPolicy::Fixed: return "fixed";
  }
  return "?";
}

BackgroundPolicy background_policy_from_string(const std::string& name) {
  if (name == "uniform") return BackgroundPolicy::Uniform;
  if (name == "literal") return BackgroundPolicy::Literal;
  if (name == "fixed") return BackgroundPolicy::Fixed;
  throw std::invalid_argument("unknown background policy '" + name + "' (expected uniform|literal|fixed)");
}

nlohmann::json to_json(const BiasSpec& spec) {
  nlohmann::json j = {{"kind", to_string(spec.kind)},
                      {"a", spec.a},
                      {"epsilon", spec.epsilon},
                      {"a_eval", spec.a_eval},
                      {"background", to_string(spec.background)}};
  if (spec.background == BackgroundPolicy::Fixed) j["background_value"] = spec.background_value;
  return j;
}

BiasSpec bias_spec_from_json(const nlohmann::json& j) {
  BiasSpec spec;
  spec.kind = bias_kind_from_string(j.value("kind", std::string("cb")));
  spec.a = j.value("a", spec.a);
  spec.epsilon = j.value("epsilon", spec.epsilon);
  spec.a_eval = j.value("a_eval", spec.a_eval);
  spec.background = background_policy_from_string(j.value("background", std::string("uniform")));
  spec.background_value = j.value("background_value", spec.background_value);
  spec.validate();
  return spec;
}

nlohmann::json bias_to_json(const Bias& bias, const BiasSpec& spec, double exponent) {
  nlohmann::json j = {{"kind", to_string(spec.kind)},
                      {"a", exponent},
                      {"epsilon", spec.epsilon},
                      {"background", to_string(spec.background)}};
  if (const auto* global = std::get_if<BiasVector>(&bias)) {
    j["values"] = global->values;
    return j;
  }
  const auto& table = std::get<PairBiasTable>(bias);
  auto entries = nlohmann::json::array();
  for (const auto& [pair, vec] : table.entries) entries.push_back({pair.first, pair.second, vec.values});
  j["entries"] = std::move(entries);
  j["fallback"] = table.fallback.values;
  return j;
}

Bias bias_from_json(const nlohmann::json& j) {
  if (j.contains("values")) return BiasVector{j.at("values").get<std::vector<double>>()};
  PairBiasTable table;
  table.fallback.values = j.at("fallback").get<std::vector<double>>();
  for (const auto& row : j.at("entries")) {
    BiasVector vec{row.at(2).get<std::vector<double>>()};
    if (vec.size() != table.fallback.size()) throw std::invalid_argument("pair bias entry length mismatch");
    table.entries.emplace(std::pair{row.at(0).get<int>(), row.at(1).get<int>()}, std::move(vec));
  }
  return table;
}

}  // namespace rtpb

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rtpb {

namespace {

void check_label(std::size_t size, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= size) {
    throw std::out_of_range("label " + std::to_string(y) + " outside " + std::to_string(size) + " classes");
  }
}

void check_bias(std::size_t size, const BiasVector& bias) {
  if (bias.size() != size) {
    throw std::invalid_argument("bias length " + std::to_string(bias.size()) + " != logits length " +
                                std::to_string(size));
  }
}

std::uint64_t count_of(const BaselineSpec& spec, int y) {
  check_label(spec.class_counts.size(), y);
  const auto n = spec.class_counts[static_cast<std::size_t>(y)];
  if (n == 0) throw std::invalid_argument("unobserved class");
  return n;
}

LossOutput weighted(LossOutput base, double weight) {
  base.value *= weight;
  for (double& g : base.grad_logits) g *= weight;
  return base;
}

}  // namespace

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  return m + std::log(sum);
}

std::vector<double> softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

LossOutput ce(std::span<const double> z, int y) {
  check_label(z.size(), y);
  LossOutput out;
  out.value = log_sum_exp(z) - z[static_cast<std::size_t>(y)];
  out.grad_logits = softmax(z);
  out.grad_logits[static_cast<std::size_t>(y)] -= 1.0;
  return out;
}

LossOutput rtpb_ce(std::span<const double> z, const BiasVector& bias, int y) {
  check_bias(z.size(), bias);
  const auto shifted = apply_bias(z, bias);
  return ce(shifted, y);
}

double theta(std::span<const double> z, const BiasVector& bias, int y) {
  check_bias(z.size(), bias);
  check_label(z.size(), y);
  const auto p = softmax(z);
  double shift = -bias.values[0];
  for (double b : bias.values) shift = std::max(shift, -b);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) sum += std::exp(-bias.values[j] - shift) * p[j];
  return bias.values[static_cast<std::size_t>(y)] + shift + std::log(sum);
}

double class_weight(const BaselineSpec& spec, int y) {
  switch (spec.kind) {
    case BaselineKind::Reweight: {
      const double inv = 1.0 / static_cast<double>(count_of(spec, y));
      if (spec.raw_reweight) return inv;
      double mean = 0.0;
      std::size_t observed = 0;
      for (auto n : spec.class_counts) {
        if (n == 0) continue;
        mean += 1.0 / static_cast<double>(n);
        ++observed;
      }
      return inv / (mean / static_cast<double>(observed));
    }
    case BaselineKind::ClassBalanced: {
      const auto n = static_cast<double>(count_of(spec, y));
      return (1.0 - spec.beta) / (1.0 - std::pow(spec.beta, n));
    }
    default:
      return 1.0;
  }
}

double ldam_margin(const BaselineSpec& spec, int y) {
  return spec.margin_c / std::pow(static_cast<double>(count_of(spec, y)), 0.25);
}

BiasVector ldam_indicator_bias(const BaselineSpec& spec, int y) {
  BiasVector bias{std::vector<double>(spec.class_counts.size(), 0.0)};
  bias.values[static_cast<std::size_t>(y)] = ldam_margin(spec, y);
  return bias;
}

LossOutput baseline_loss(const BaselineSpec& spec, std::span<const double> z, int y) {
  check_label(z.size(), y);
  switch (spec.kind) {
    case BaselineKind::Reweight:
    case BaselineKind::ClassBalanced:
      if (spec.class_counts.size() != z.size()) throw std::invalid_argument("class_counts length != logits length");
      return weighted(ce(z, y), class_weight(spec, y));
    case BaselineKind::Focal: {
      const auto uy = static_cast<std::size_t>(y);
      const double log_p = z[uy] - log_sum_exp(z);
      LossOutput out;
      out.grad_logits = softmax(z);
      const double p = out.grad_logits[uy];
      const double q = 1.0 - p;
      out.value = -spec.alpha * std::pow(q, spec.gamma) * log_p;
      // dL/dz_j = (dL/dp) * p * (delta_jy - p_j), folded into one coefficient.
      double coef = -spec.alpha * std::pow(q, spec.gamma);
      if (spec.gamma != 0.0) coef += spec.alpha * spec.gamma * p * std::pow(q, spec.gamma - 1.0) * log_p;
      for (std::size_t j = 0; j < out.grad_logits.size(); ++j) {
        out.grad_logits[j] = coef * ((j == uy ? 1.0 : 0.0) - out.grad_logits[j]);
      }
      return out;
    }
    case BaselineKind::Ldam: {
      if (spec.class_counts.size() != z.size()) throw std::invalid_argument("class_counts length != logits length");
      // Direct margin form: -log e^{z_y - D} / (e^{z_y - D} + sum_{j != y} e^{z_j}).
      const auto uy = static_cast<std::size_t>(y);
      const double margin = ldam_margin(spec, y);
      std::vector<double> adjusted(z.begin(), z.end());
      adjusted[uy] -= margin;
      LossOutput out;
      out.value = log_sum_exp(adjusted) - adjusted[uy];
      out.grad_logits = softmax(adjusted);
      out.grad_logits[uy] -= 1.0;
      return out;
    }
  }
  throw std::logic_error("unknown baseline kind");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::CE: return "ce";
    case LossKind::RTPB: return "rtpb";
    case LossKind::Reweight: return "reweight";
    case LossKind::ClassBalanced: return "class_balanced";
    case LossKind::Focal: return "focal";
    case LossKind::Ldam: return "ldam";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "ce") return LossKind::CE;
  if (name == "rtpb") return LossKind::RTPB;
  if (name == "reweight") return LossKind::Reweight;
  if (name == "class_balanced") return LossKind::ClassBalanced;
  if (name == "focal") return LossKind::Focal;
  if (name == "ldam") return LossKind::Ldam;
  throw std::invalid_argument("unknown loss kind '" + name + "'");
}

nlohmann::json to_json(const LossSpec& spec) {
  return {{"kind", to_string(spec.kind)}, {"beta", spec.beta},         {"gamma", spec.gamma},
          {"alpha", spec.alpha},          {"margin_c", spec.margin_c}, {"raw_reweight", spec.raw_reweight}};
}

LossSpec loss_spec_from_json(const nlohmann::json& j) {
  LossSpec spec;
  spec.kind = loss_kind_from_string(j.value("kind", std::string("rtpb")));
  spec.beta = j.value("beta", spec.beta);
  spec.gamma = j.value("gamma", spec.gamma);
  spec.alpha = j.value("alpha", spec.alpha);
  spec.margin_c = j.value("margin_c", spec.margin_c);
  spec.raw_reweight = j.value("raw_reweight", spec.raw_reweight);
  return spec;
}

BaselineSpec make_baseline(const LossSpec& spec, std::vector<std::uint64_t> class_counts) {
  BaselineSpec out;
  switch (spec.kind) {
    case LossKind::Reweight: out.kind = BaselineKind::Reweight; break;
    case LossKind::ClassBalanced: out.kind = BaselineKind::ClassBalanced; break;
    case LossKind::Focal: out.kind = BaselineKind::Focal; break;
    case LossKind::Ldam: out.kind = BaselineKind::Ldam; break;
    default: throw std::invalid_argument("loss kind " + to_string(spec.kind) + " is not a baseline");
  }
  out.beta = spec.beta;
  out.gamma = spec.gamma;
  out.alpha = spec.alpha;
  out.margin_c = spec.margin_c;
  out.raw_reweight = spec.raw_reweight;
  out.class_counts = std::move(class_counts);
  return out;
}

}  // namespace rtpb

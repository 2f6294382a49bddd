// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtpb/bias.hpp"

namespace rtpb {

/// Scalar loss and its gradient with respect to the logits.
struct LossOutput {
  double value = 0.0;
  std::vector<double> grad_logits;
};

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> z);
double log_sum_exp(std::span<const double> z);

/// Softmax cross-entropy, -log softmax(z)[y].
LossOutput ce(std::span<const double> z, int y);

/// Cross-entropy on z - b. The gradient is taken with respect to z; the
/// bias is a constant.
LossOutput rtpb_ce(std::span<const double> z, const BiasVector& bias, int y);

/// Extra loss carried by the bias: b_y + log sum_j exp(-b_j) softmax(z)_j.
/// Evaluated directly from softmax(z), independently of rtpb_ce.
double theta(std::span<const double> z, const BiasVector& bias, int y);

enum class BaselineKind { Reweight, ClassBalanced, Focal, Ldam };

struct BaselineSpec {
  BaselineKind kind = BaselineKind::Reweight;
  double beta = 0.999;      // class-balanced
  double gamma = 2.0;       // focal
  double alpha = 0.25;      // focal
  double margin_c = 0.5;    // LDAM
  bool raw_reweight = false;  // skip the mean-one normalization of 1/n weights
  std::vector<std::uint64_t> class_counts;
};

/// Reweighted CE, class-balanced CE, focal loss or LDAM. Throws
/// std::invalid_argument("unobserved class") when a count-based kind meets
/// n_y = 0, and std::out_of_range for a bad label.
LossOutput baseline_loss(const BaselineSpec& spec, std::span<const double> z, int y);

/// Per-class weight used by the reweighting kinds.
double class_weight(const BaselineSpec& spec, int y);

/// LDAM margin C / n_y^(1/4).
double ldam_margin(const BaselineSpec& spec, int y);

/// Bias that is ldam_margin at y and zero elsewhere; rtpb_ce with it
/// reproduces LDAM.
BiasVector ldam_indicator_bias(const BaselineSpec& spec, int y);

/// Training loss selector.
enum class LossKind { CE, RTPB, Reweight, ClassBalanced, Focal, Ldam };

struct LossSpec {
  LossKind kind = LossKind::RTPB;
  double beta = 0.999;
  double gamma = 2.0;
  double alpha = 0.25;
  double margin_c = 0.5;
  bool raw_reweight = false;

  bool operator==(const LossSpec&) const = default;
};

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);
nlohmann::json to_json(const LossSpec& spec);
LossSpec loss_spec_from_json(const nlohmann::json& j);

/// Baseline spec for a non-RTPB, non-CE loss kind with the given counts.
BaselineSpec make_baseline(const LossSpec& spec, std::vector<std::uint64_t> class_counts);

}  // namespace rtpb

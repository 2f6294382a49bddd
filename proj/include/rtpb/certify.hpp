// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace rtpb {

/// Finite-difference certification of every analytic gradient in the
/// library: the six relation losses, the numeric layers, the DTrans stages
/// and a full toy DTrans.
struct CertifyOptions {
  int instances = 100;
  std::uint64_t seed = 2026;
  double step = 1e-5;
  double tol = 1e-4;        // losses, layers, DTrans stages
  double model_tol = 1e-3;  // full toy DTrans
  /// Coordinates checked per full-model instance; 0 checks all of them.
  std::size_t model_coordinates = 0;
};

struct CheckOutcome {
  std::string name;
  int instances = 0;
  std::size_t coordinates = 0;  // summed over instances
  double max_rel_error = 0.0;
  double tol = 0.0;
  int failures = 0;
  int resampled = 0;  // instances redrawn because a ReLU input sat near zero

  bool passed() const { return failures == 0 && instances > 0; }
};

std::vector<std::string> certify_check_names();

/// Runs the named checks (all when `names` is empty).
std::vector<CheckOutcome> certify_gradients(const CertifyOptions& options, const std::vector<std::string>& names = {});

nlohmann::json to_json(const CheckOutcome& outcome);

}  // namespace rtpb

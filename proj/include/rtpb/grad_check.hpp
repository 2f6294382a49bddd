// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rtpb {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  bool passed = true;
};

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Compares `analytic` against central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
/// Throws std::runtime_error if f returns a non-finite value.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> x, std::span<const double> analytic,
                           double h, double tol);

/// Same, restricted to the listed coordinates.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> x, std::span<const double> analytic,
                           std::span<const std::size_t> coordinates, double h, double tol);

}  // namespace rtpb

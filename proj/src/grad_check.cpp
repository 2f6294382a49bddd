// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rtpb {

GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> x, std::span<const double> analytic,
                           double h, double tol) {
  std::vector<std::size_t> all(x.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return grad_check(f, x, analytic, all, h, tol);
}

GradCheckReport grad_check(const ScalarFunction& f, std::span<const double> x, std::span<const double> analytic,
                           std::span<const std::size_t> coordinates, double h, double tol) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  if (analytic.size() != x.size()) throw std::invalid_argument("grad_check: gradient length != point length");
  std::vector<double> probe(x.begin(), x.end());
  auto eval = [&](std::size_t i) {
    const double v = f(probe);
    if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite value at coordinate " + std::to_string(i));
    return v;
  };
  GradCheckReport report;
  for (const std::size_t i : coordinates) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double plus = eval(i);
    probe[i] = saved - h;
    const double minus = eval(i);
    probe[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_coordinate = i;
    }
  }
  report.passed = report.max_rel_error < tol;
  return report;
}

}  // namespace rtpb

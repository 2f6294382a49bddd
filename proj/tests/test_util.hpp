// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cmath>
#include <vector>

#include "rtpb/rng.hpp"
#include "rtpb/stats.hpp"

namespace rtpb::test {

inline std::vector<double> uniform_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline std::vector<Triplet> random_triplets(Rng& rng, std::size_t n, int num_objects, int num_relations) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(num_objects))),
                   static_cast<int>(rng.below(static_cast<std::uint64_t>(num_objects))),
                   1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(num_relations)))});
  }
  return out;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace rtpb::test

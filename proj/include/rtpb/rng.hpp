// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstdint>
#include <span>

namespace rtpb {

/// Portable 64-bit generator: xoshiro256** seeded through SplitMix64.
///
/// Every derived quantity (uniform doubles, bounded integers, normals) is
/// built from `next()` with integer arithmetic or IEEE-754 basic operations
/// plus std::log/std::sqrt/std::cos, so streams are reproducible across
/// platforms that provide correctly-rounded libm for those three calls.
/// The exact algorithms are documented in docs/rng.md.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n); unbiased by rejection. n must be > 0.
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller (one draw per two uniforms, no caching).
  double normal();

  /// Fisher-Yates shuffle, highest index first.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Index drawn from a discrete distribution by inverse CDF over `probs`.
  std::size_t categorical(std::span<const double> probs);

 private:
  std::uint64_t state_[4];
};

/// SplitMix64 output function applied to one 64-bit word.
std::uint64_t mix64(std::uint64_t z);

/// Seed of an independent child stream `stream` derived from `seed`.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace rtpb

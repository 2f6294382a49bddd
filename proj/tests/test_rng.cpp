// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "rtpb/rng.hpp"

using namespace rtpb;

// Reference outputs from an independent Python transcription of
// SplitMix64 seeding + xoshiro256**.
TEST(Rng, KnownAnswers) {
  Rng a(0);
  EXPECT_EQ(a.next(), 0x99ec5f36cb75f2b4ULL);
  EXPECT_EQ(a.next(), 0xbf6e1f784956452aULL);
  EXPECT_EQ(a.next(), 0x1a5f849d4933e6e0ULL);
  Rng b(42);
  EXPECT_EQ(b.next(), 0x15780b2e0c2ec716ULL);
  EXPECT_EQ(b.next(), 0x6104d9866d113a7eULL);
  EXPECT_EQ(b.next(), 0xae17533239e499a1ULL);
  EXPECT_EQ(substream_seed(7, 0), 0x63cbe1e459320dd7ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(123), b(123), c(124);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformRange) {
  Rng rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
}

TEST(Rng, BelowIsRoughlyUniform) {
  Rng rng(2);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) hist[rng.below(7)]++;
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
  EXPECT_EQ(rng.below(1), 0u);
}

TEST(Rng, NormalMoments) {
  Rng rng(3);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  rng.shuffle(std::span<int>(w));
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(Rng, CategoricalSkipsZeroMass) {
  Rng rng(5);
  const std::vector<double> p = {0.0, 0.3, 0.0, 0.7, 0.0};
  std::vector<int> hist(5, 0);
  for (int i = 0; i < 20000; ++i) hist[rng.categorical(p)]++;
  EXPECT_EQ(hist[0] + hist[2] + hist[4], 0);
  EXPECT_NEAR(hist[1] / 20000.0, 0.3, 0.02);
}

TEST(Rng, SubstreamsDiffer) {
  EXPECT_NE(substream_seed(1, 0), substream_seed(1, 1));
  EXPECT_NE(substream_seed(1, 0), substream_seed(2, 0));
}

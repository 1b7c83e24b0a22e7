/*
 * Copyright 2026 The SplitGuard Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sglab/error.hpp"
#include "sglab/rng.hpp"
#include "sglab/tensor.hpp"

namespace sglab {
namespace {

TEST(Rng, EngineMatchesStandardSequence) {
  // mt19937_64's 10000th output is fixed by the standard.
  Rng rng(5489);
  std::uint64_t x = 0;
  for (int i = 0; i < 10000; ++i) x = rng.next_u64();
  EXPECT_EQ(x, 9981545732273789042ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.uniform(), b.uniform());
    ASSERT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, UniformStaysInUnitInterval) {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowIsUniform) {
  Rng rng(11);
  constexpr int kN = 7;
  constexpr int kDraws = 70000;
  std::vector<int> counts(kN, 0);
  for (int i = 0; i < kDraws; ++i) {
    const auto v = rng.below(kN);
    ASSERT_LT(v, static_cast<std::uint64_t>(kN));
    ++counts[v];
  }
  for (int c : counts) EXPECT_LT(std::fabs(oracle::binomial_z(c, kDraws, 1.0 / kN)), 4.0);
}

TEST(Rng, NormalMoments) {
  Rng rng(9);
  constexpr int kDraws = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / kDraws;
  const double var = sq / kDraws - mean * mean;
  EXPECT_NEAR(mean, 0.0, 4.0 / std::sqrt(kDraws));
  EXPECT_NEAR(var, 1.0, 4.0 * std::sqrt(2.0 / kDraws));
}

TEST(Rng, HashedUniformIsStatelessAndSpread) {
  EXPECT_EQ(hashed_uniform(1, 17), hashed_uniform(1, 17));
  EXPECT_NE(hashed_uniform(1, 17), hashed_uniform(2, 17));
  int below_tenth = 0;
  constexpr int kDraws = 50000;
  for (int i = 0; i < kDraws; ++i) {
    const double u = hashed_uniform(77, i);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    below_tenth += u < 0.1;
  }
  EXPECT_LT(std::fabs(oracle::binomial_z(below_tenth, kDraws, 0.1)), 4.0);
}

TEST(Rng, ForkedStreamsDiffer) {
  Rng parent(1);
  Rng a(parent.fork()), b(parent.fork());
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), InvalidInput);
  const Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.at(1, 0), 4.0);
  EXPECT_EQ(shape_product({4, 0, 2}), 0u);
  EXPECT_EQ(shape_string({2, 3}), "[2x3]");
}

TEST(Tensor, GatherRows) {
  const Tensor t({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::vector<std::size_t> idx = {2, 0, 2};
  const Tensor g = t.gather_rows(idx);
  EXPECT_EQ(g, Tensor({3, 2}, std::vector<double>{5, 6, 1, 2, 5, 6}));
}

TEST(Tensor, FiniteCheck) {
  Tensor t({2}, 1.0);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Tensor, VectorHelpers) {
  const std::vector<double> a = {3, 4};
  std::vector<double> b = {1, 1};
  EXPECT_EQ(norm(a), 5.0);
  EXPECT_EQ(dot(a, b), 7.0);
  axpy(2.0, a, b);
  EXPECT_EQ(b, (std::vector<double>{7, 9}));
}

}  // namespace
}  // namespace sglab

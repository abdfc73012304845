// Copyright 2026 The mpstat-twin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mpstat/analysis.hpp"

namespace mpstat {
namespace {

// Brute-force fractional rank: count of smaller values plus the midpoint of
// the tie block.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> r;
  for (double x : v) {
    double less = 0, equal = 0;
    for (double y : v) {
      less += y < x;
      equal += y == x;
    }
    r.push_back(less + (equal + 1) / 2);
  }
  return r;
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

TEST(FitLineTest, ExactLineHasZeroResidual) {
  std::vector<double> x, y;
  for (int i = 0; i < 50; ++i) {
    x.push_back(i);
    y.push_back(2.5 * i - 4);
  }
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 2.5, 1e-12);
  EXPECT_NEAR(f.intercept, -4, 1e-10);
  EXPECT_NEAR(f.max_abs_residual, 0, 1e-10);
}

TEST(FitLineTest, SymmetricOutlier) {
  // Points (0,0),(1,1),(2,0): slope 0, intercept 1/3, worst residual 2/3.
  const std::vector<double> x{0, 1, 2}, y{0, 1, 0};
  const auto f = fit_line(x, y);
  EXPECT_NEAR(f.slope, 0, 1e-15);
  EXPECT_NEAR(f.intercept, 1.0 / 3, 1e-15);
  EXPECT_NEAR(f.max_abs_residual, 2.0 / 3, 1e-15);
}

TEST(MovingAverageTest, ShrinksAtEnds) {
  const std::vector<double> y{1, 2, 3, 4, 5};
  const auto m = moving_average(y, 5);
  EXPECT_DOUBLE_EQ(m[0], 2.0);  // (1+2+3)/3
  EXPECT_DOUBLE_EQ(m[1], 2.5);
  EXPECT_DOUBLE_EQ(m[2], 3.0);
  EXPECT_DOUBLE_EQ(m[4], 4.0);
}

TEST(ExtremaTest, ProminenceFilters) {
  const std::vector<double> y{0, 5, 4, 4.5, 0, -3, 0, 1, 0};
  const auto all = find_extrema(y, 0.0);
  ASSERT_EQ(all.size(), 5u);
  EXPECT_EQ(all[0].index, 1u);
  EXPECT_TRUE(all[0].is_max);
  EXPECT_DOUBLE_EQ(all[0].prominence, 5.0);
  EXPECT_DOUBLE_EQ(all[2].prominence, 0.5);  // the shoulder at 4.5
  const auto big = find_extrema(y, 2.0);
  ASSERT_EQ(big.size(), 2u);
  EXPECT_EQ(big[1].index, 5u);
  EXPECT_FALSE(big[1].is_max);
}

TEST(ExtremaTest, PlateauReportsMiddle) {
  const std::vector<double> y{0, 2, 2, 2, 0};
  const auto e = find_extrema(y, 0.0);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_EQ(e[0].index, 2u);
}

TEST(RankTest, MatchesBruteForceWithTies) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng() % 30);
    for (auto& x : v) x = static_cast<double>(rng() % 7);
    EXPECT_EQ(ranks(v), oracle_ranks(v));
  }
}

TEST(SpearmanTest, MatchesPearsonOfOracleRanks) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(3 + rng() % 20), y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = std::round(n(rng) * 2);
      y[i] = -x[i] + n(rng);
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) {
      EXPECT_EQ(spearman(x, y), 0.0);  // undefined correlation reported as zero
      continue;
    }
    EXPECT_NEAR(spearman(x, y), oracle_pearson(oracle_ranks(x), oracle_ranks(y)), 1e-12);
    EXPECT_NEAR(pearson(x, y), oracle_pearson(x, y), 1e-12);
  }
}

TEST(SpearmanTest, PerfectAnticorrelation) {
  const std::vector<double> x{1, 2, 3, 4}, y{10, 5, 0, -7};
  EXPECT_DOUBLE_EQ(spearman(x, y), -1.0);
}

}  // namespace
}  // namespace mpstat

// Copyright 2026 The fairprune Authors.
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


#include <gtest/gtest.h>

#include <cmath>

#include "fairprune/stats.hpp"

namespace fairprune {
namespace {

using V = std::vector<double>;

TEST(Stats, MeanAndStd) {
  const V x{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(x), 5.0);
  EXPECT_NEAR(sample_std(x), std::sqrt(32.0 / 7.0), 1e-15);
  EXPECT_EQ(sample_std(V{3.0}), 0.0);
}

TEST(Stats, Median) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
}

TEST(Stats, AverageRanks) { EXPECT_EQ(average_ranks(V{10, 20, 10, 30}), (V{1.5, 3, 1.5, 4})); }

TEST(Stats, Correlations) {
  const V x{1, 2, 3, 4, 5};
  EXPECT_NEAR(pearson(x, V{2, 4, 6, 8, 10}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, V{1, 4, 9, 16, 100}), 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, V{5, 4, 3, 2, 1}), -1.0, 1e-15);
  EXPECT_TRUE(std::isnan(spearman(x, V{1, 1, 1, 1, 1})));
  // scipy.stats.spearmanr([1,2,3,4,5],[2,1,4,3,5]) = 0.8
  EXPECT_NEAR(spearman(x, V{2, 1, 4, 3, 5}), 0.8, 1e-15);
}

}  // namespace
}  // namespace fairprune

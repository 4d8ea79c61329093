// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "cfmimo/errors.hpp"
#include "cfmimo/subsets.hpp"

using namespace cfmimo;

TEST(Subsets, Counts) {
  EXPECT_EQ(count_subsets(8, 5), 56);
  EXPECT_EQ(count_subsets(4, 2), 6);
  EXPECT_EQ(count_subsets(9, 0), 1);
  EXPECT_EQ(count_subsets(9, 9), 1);
  EXPECT_EQ(count_global_subsets(8, 5, 3), 175616);
  EXPECT_EQ(count_subsets(62, 31), 465428353255261088LL);
  EXPECT_THROW(count_subsets(68, 34), OverflowError);
  EXPECT_THROW(count_global_subsets(64, 32, 2), OverflowError);
  EXPECT_THROW(count_subsets(3, 4), InvalidInput);
}

TEST(Subsets, AnchorLabels) {
  EXPECT_EQ(subset_from_index(1, 8, 5), (std::vector<int>{1, 2, 3, 4, 5}));
  EXPECT_EQ(subset_from_index(2, 8, 5), (std::vector<int>{1, 2, 3, 4, 6}));
  EXPECT_EQ(subset_from_index(56, 8, 5), (std::vector<int>{4, 5, 6, 7, 8}));
  EXPECT_EQ(index_from_subset(std::vector<int>{1, 2, 3, 4, 5}, 8), 1);
  EXPECT_EQ(index_from_subset(std::vector<int>{4, 5, 6, 7, 8}, 8), 56);
}

TEST(Subsets, OutOfRangeAndMalformed) {
  EXPECT_THROW(subset_from_index(0, 8, 5), InvalidInput);
  EXPECT_THROW(subset_from_index(57, 8, 5), InvalidInput);
  EXPECT_THROW(index_from_subset(std::vector<int>{1, 1, 2}, 4), InvalidInput);
  EXPECT_THROW(index_from_subset(std::vector<int>{0, 2}, 4), InvalidInput);
  EXPECT_THROW(index_from_subset(std::vector<int>{2, 5}, 4), InvalidInput);
  EXPECT_THROW(index_from_subset(std::vector<int>{3, 2}, 4), InvalidInput);
}

// Enumerates every m-subset of {1..n} in lexicographic order by brute force
// (next_permutation over a selection mask) and checks the closed-form ranking.
TEST(Subsets, BijectionAgainstBruteForceEnumeration) {
  for (int n = 1; n <= 14; ++n) {
    for (int m = 0; m <= n; ++m) {
      std::vector<bool> mask(static_cast<std::size_t>(n), false);
      std::fill(mask.begin(), mask.begin() + m, true);
      std::int64_t label = 0;
      std::vector<int> previous;
      do {
        std::vector<int> members;
        for (int a = 0; a < n; ++a) {
          if (mask[static_cast<std::size_t>(a)]) members.push_back(a + 1);
        }
        ++label;
        ASSERT_EQ(subset_from_index(label, n, m), members) << "n=" << n << " m=" << m << " j=" << label;
        ASSERT_EQ(index_from_subset(members, n), label);
        if (label > 1) ASSERT_TRUE(std::lexicographical_compare(previous.begin(), previous.end(), members.begin(),
                                                                members.end()));
        previous = members;
      } while (std::prev_permutation(mask.begin(), mask.end()));
      ASSERT_EQ(label, count_subsets(n, m));
    }
  }
}

TEST(Subsets, MakeSubsetAndFullSubset) {
  const auto s = make_subset(7, 8, 5);
  EXPECT_EQ(s.n, 8);
  EXPECT_EQ(s.m, 5);
  EXPECT_EQ(s.label, 7);
  EXPECT_EQ(s.members, subset_from_index(7, 8, 5));
  const auto f = full_subset(4);
  EXPECT_EQ(f.members, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(f.label, 1);
}

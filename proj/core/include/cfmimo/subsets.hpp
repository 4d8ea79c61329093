// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cfmimo {

// One M-of-N antenna subset of an AP. Labels run 1..C(n,m) in lexicographic
// order of the sorted member lists; members are 1-based antenna indices.
struct AntennaSubset {
  int n = 0;
  int m = 0;
  std::int64_t label = 0;
  std::vector<int> members;

  bool operator==(const AntennaSubset&) const = default;
};

// Exact binomial coefficient; throws OverflowError past int64.
std::int64_t count_subsets(int n, int m);

// C(n,m)^I, the size of the joint selection space.
std::int64_t count_global_subsets(int n, int m, int aps);

std::vector<int> subset_from_index(std::int64_t label, int n, int m);
std::int64_t index_from_subset(std::span<const int> members, int n);

AntennaSubset make_subset(std::int64_t label, int n, int m);
AntennaSubset full_subset(int n);

}  // namespace cfmimo

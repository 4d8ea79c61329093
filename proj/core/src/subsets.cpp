// SPDX-License-Identifier: Apache-2.0
#include "cfmimo/subsets.hpp"

#include <limits>
#include <string>

#include "cfmimo/errors.hpp"

namespace cfmimo {

std::int64_t count_subsets(int n, int m) {
  if (n < 0 || m < 0 || m > n) {
    throw InvalidInput("count_subsets needs 0 <= m <= n");
  }
  m = std::min(m, n - m);
  __int128 result = 1;
  for (int i = 1; i <= m; ++i) {
    // result * (n - m + i) is divisible by i at every step.
    result = result * (n - m + i) / i;
    if (result > std::numeric_limits<std::int64_t>::max()) {
      throw OverflowError("C(" + std::to_string(n) + "," + std::to_string(m) + ") overflows int64");
    }
  }
  return static_cast<std::int64_t>(result);
}

std::int64_t count_global_subsets(int n, int m, int aps) {
  const std::int64_t per_ap = count_subsets(n, m);
  __int128 total = 1;
  for (int i = 0; i < aps; ++i) {
    total *= per_ap;
    if (total > std::numeric_limits<std::int64_t>::max()) {
      throw OverflowError("global subset count overflows int64");
    }
  }
  return static_cast<std::int64_t>(total);
}

std::vector<int> subset_from_index(std::int64_t label, int n, int m) {
  const std::int64_t total = count_subsets(n, m);
  if (label < 1 || label > total) {
    throw InvalidInput("subset label " + std::to_string(label) + " outside 1.." + std::to_string(total));
  }
  std::vector<int> members;
  members.reserve(m);
  std::int64_t rank = label - 1;
  int next = 1;
  for (int pos = 0; pos < m; ++pos) {
    const int remaining = m - pos - 1;
    for (int c = next;; ++c) {
      const std::int64_t block = count_subsets(n - c, remaining);
      if (rank < block) {
        members.push_back(c);
        next = c + 1;
        break;
      }
      rank -= block;
    }
  }
  return members;
}

std::int64_t index_from_subset(std::span<const int> members, int n) {
  const int m = static_cast<int>(members.size());
  if (m > n) throw InvalidInput("subset larger than the array");
  std::int64_t rank = 0;
  int prev = 0;
  for (int pos = 0; pos < m; ++pos) {
    const int a = members[pos];
    if (a < 1 || a > n) throw InvalidInput("antenna index " + std::to_string(a) + " out of range");
    if (a <= prev) throw InvalidInput("subset members must be strictly increasing");
    for (int c = prev + 1; c < a; ++c) rank += count_subsets(n - c, m - pos - 1);
    prev = a;
  }
  return rank + 1;
}

AntennaSubset make_subset(std::int64_t label, int n, int m) {
  return AntennaSubset{n, m, label, subset_from_index(label, n, m)};
}

AntennaSubset full_subset(int n) { return make_subset(1, n, n); }

}  // namespace cfmimo

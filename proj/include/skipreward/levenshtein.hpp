#pragma once

#include <algorithm>
#include <cstddef>
#include <string_view>
#include <vector>

namespace skipreward {

// Unit-cost edit distance (insert, delete, substitute) over bytes.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      const std::size_t sub = diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({sub, up + 1, row[j - 1] + 1});
      diag = up;
    }
  }
  return row[b.size()];
}

// distance / max(|a|, |b|, 1), in [0, 1].
inline double normalized_levenshtein(std::string_view a, std::string_view b) {
  const std::size_t denom = std::max<std::size_t>({a.size(), b.size(), 1});
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(denom);
}

}  // namespace skipreward

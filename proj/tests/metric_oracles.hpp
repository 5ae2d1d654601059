#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

namespace gdr::testing {

// Pair-counting ARI (Hubert-Arabie via the 2x2 pair table), O(N^2).
inline double pair_counting_ari(const std::vector<int32_t>& pred, const std::vector<int32_t>& truth) {
  double a = 0, b = 0, c = 0, d = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    for (size_t j = i + 1; j < pred.size(); ++j) {
      const bool same_t = truth[i] == truth[j];
      const bool same_p = pred[i] == pred[j];
      if (same_t && same_p) ++a;
      else if (same_t) ++b;
      else if (same_p) ++c;
      else ++d;
    }
  }
  return 2.0 * (a * d - b * c) / ((a + b) * (b + d) + (a + c) * (c + d));
}

inline double brute_iou(const std::vector<int32_t>& pred, int32_t p, const std::vector<int32_t>& truth, int32_t t) {
  int inter = 0, uni = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred[i] == p, b = truth[i] == t;
    inter += a && b;
    uni += a || b;
  }
  return uni ? static_cast<double>(inter) / uni : 0.0;
}

// Best total IoU over every one-to-one assignment of segments to objects.
inline double brute_force_miou(const std::vector<int32_t>& pred, const std::vector<int32_t>& truth) {
  std::vector<int32_t> objects, segments;
  for (int32_t t : truth)
    if (t != 0 && std::find(objects.begin(), objects.end(), t) == objects.end()) objects.push_back(t);
  for (int32_t p : pred)
    if (std::find(segments.begin(), segments.end(), p) == segments.end()) segments.push_back(p);
  // pad segments with "none" (-1) so every object can stay unmatched
  while (segments.size() < objects.size()) segments.push_back(-1);
  std::sort(segments.begin(), segments.end());
  double best = 0.0;
  do {
    double total = 0.0;
    for (size_t o = 0; o < objects.size(); ++o) {
      if (segments[o] >= 0) total += brute_iou(pred, segments[o], truth, objects[o]);
    }
    best = std::max(best, total);
  } while (std::next_permutation(segments.begin(), segments.end()));
  return best / static_cast<double>(objects.size());
}

// Best total score over all partial one-to-one row/column assignments.
inline double brute_force_assignment(const std::vector<std::vector<double>>& score) {
  const size_t rows = score.size(), cols = score.empty() ? 0 : score[0].size();
  std::vector<int> cols_idx(std::max(rows, cols));
  std::iota(cols_idx.begin(), cols_idx.end(), 0);
  double best = 0.0;
  do {
    double total = 0.0;
    for (size_t r = 0; r < rows; ++r) {
      if (static_cast<size_t>(cols_idx[r]) < cols) total += score[r][static_cast<size_t>(cols_idx[r])];
    }
    best = std::max(best, total);
  } while (std::next_permutation(cols_idx.begin(), cols_idx.end()));
  return best;
}

}  // namespace gdr::testing

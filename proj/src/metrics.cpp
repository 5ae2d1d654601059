#include "gdr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace gdr::metrics {

void SegmentationPair::validate() const {
  if (predicted.size() != truth.size()) throw std::invalid_argument("segmentation maps differ in size");
  auto negative = [](int32_t v) { return v < 0; };
  if (std::any_of(predicted.begin(), predicted.end(), negative) || std::any_of(truth.begin(), truth.end(), negative)) {
    throw std::invalid_argument("segmentation labels must be nonnegative");
  }
}

namespace {

/// Dense relabeling of arbitrary labels to 0..k-1.
struct Compressed {
  std::vector<int> ids;
  int count = 0;
};

Compressed compress(std::span<const int32_t> labels, const std::vector<char>* keep = nullptr) {
  std::unordered_map<int32_t, int> map;
  Compressed out;
  out.ids.resize(labels.size(), -1);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (keep && !(*keep)[i]) continue;
    auto [it, inserted] = map.try_emplace(labels[i], out.count);
    if (inserted) ++out.count;
    out.ids[i] = it->second;
  }
  return out;
}

double comb2(double n) { return n * (n - 1.0) / 2.0; }

struct Overlap {
  std::vector<int32_t> objects;              // truth labels != 0
  std::vector<int64_t> object_area;
  std::vector<int64_t> segment_area;
  std::vector<std::vector<int64_t>> inter;   // object x segment
};

Overlap overlaps(const SegmentationPair& pair) {
  Overlap ov;
  std::unordered_map<int32_t, int> obj_index;
  for (int32_t t : pair.truth) {
    if (t != 0 && obj_index.try_emplace(t, static_cast<int>(ov.objects.size())).second) ov.objects.push_back(t);
  }
  auto seg = compress(pair.predicted);
  ov.object_area.assign(ov.objects.size(), 0);
  ov.segment_area.assign(static_cast<size_t>(seg.count), 0);
  ov.inter.assign(ov.objects.size(), std::vector<int64_t>(static_cast<size_t>(seg.count), 0));
  for (size_t i = 0; i < pair.truth.size(); ++i) {
    const int s = seg.ids[i];
    ++ov.segment_area[static_cast<size_t>(s)];
    if (pair.truth[i] == 0) continue;
    const int o = obj_index.at(pair.truth[i]);
    ++ov.object_area[static_cast<size_t>(o)];
    ++ov.inter[static_cast<size_t>(o)][static_cast<size_t>(s)];
  }
  return ov;
}

std::vector<std::vector<double>> iou_matrix(const Overlap& ov) {
  std::vector<std::vector<double>> iou(ov.objects.size(), std::vector<double>(ov.segment_area.size(), 0.0));
  for (size_t o = 0; o < ov.objects.size(); ++o) {
    for (size_t s = 0; s < ov.segment_area.size(); ++s) {
      const auto inter = static_cast<double>(ov.inter[o][s]);
      const double uni = static_cast<double>(ov.object_area[o] + ov.segment_area[s]) - inter;
      iou[o][s] = uni > 0.0 ? inter / uni : 0.0;
    }
  }
  return iou;
}

}  // namespace

MetricValue ari(const SegmentationPair& pair, bool foreground_only) {
  pair.validate();
  std::vector<char> keep(pair.truth.size(), 1);
  if (foreground_only) {
    for (size_t i = 0; i < keep.size(); ++i) keep[i] = pair.truth[i] != 0;
  }
  const auto n = static_cast<int64_t>(std::count(keep.begin(), keep.end(), 1));
  if (n == 0) return {0.0, true};

  auto pred = compress(pair.predicted, &keep);
  auto truth = compress(pair.truth, &keep);
  std::vector<int64_t> table(static_cast<size_t>(pred.count) * static_cast<size_t>(truth.count), 0);
  std::vector<int64_t> pred_sum(static_cast<size_t>(pred.count), 0);
  std::vector<int64_t> truth_sum(static_cast<size_t>(truth.count), 0);
  for (size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    const auto p = static_cast<size_t>(pred.ids[i]);
    const auto t = static_cast<size_t>(truth.ids[i]);
    ++table[p * static_cast<size_t>(truth.count) + t];
    ++pred_sum[p];
    ++truth_sum[t];
  }
  double index = 0.0, sum_pred = 0.0, sum_truth = 0.0;
  for (int64_t c : table) index += comb2(static_cast<double>(c));
  for (int64_t c : pred_sum) sum_pred += comb2(static_cast<double>(c));
  for (int64_t c : truth_sum) sum_truth += comb2(static_cast<double>(c));
  const double total = comb2(static_cast<double>(n));
  if (total == 0.0) return {1.0, false};
  const double expected = sum_pred * sum_truth / total;
  const double max_index = 0.5 * (sum_pred + sum_truth);
  if (max_index == expected) return {1.0, false};  // both partitions trivial and identical
  return {(index - expected) / (max_index - expected), false};
}

MetricValue mbo(const SegmentationPair& pair) {
  pair.validate();
  const auto ov = overlaps(pair);
  if (ov.objects.empty()) return {0.0, true};
  const auto iou = iou_matrix(ov);
  double total = 0.0;
  for (const auto& row : iou) total += *std::max_element(row.begin(), row.end());
  return {total / static_cast<double>(ov.objects.size()), false};
}

MetricValue miou(const SegmentationPair& pair) {
  pair.validate();
  const auto ov = overlaps(pair);
  if (ov.objects.empty()) return {0.0, true};
  const auto iou = iou_matrix(ov);
  const auto match = max_weight_assignment(iou);
  double total = 0.0;
  for (size_t o = 0; o < match.size(); ++o) {
    if (match[o] >= 0) total += iou[o][static_cast<size_t>(match[o])];
  }
  return {total / static_cast<double>(ov.objects.size()), false};
}

std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& score) {
  const size_t rows = score.size();
  if (rows == 0) return {};
  const size_t cols = score[0].size();
  for (const auto& r : score) {
    if (r.size() != cols) throw std::invalid_argument("assignment: ragged score matrix");
  }
  // Square cost matrix, 1-based, minimization of -score; padding costs 0.
  const size_t n = std::max(rows, cols);
  auto cost = [&](size_t i, size_t j) -> double {
    return (i <= rows && j <= cols) ? -score[i - 1][j - 1] : 0.0;
  };
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<size_t> p(n + 1, 0), way(n + 1, 0);
  for (size_t i = 1; i <= n; ++i) {
    p[0] = i;
    size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const size_t i0 = p[j0];
      double delta = inf;
      size_t j1 = 0;
      for (size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> match(rows, -1);
  for (size_t j = 1; j <= n; ++j) {
    if (p[j] >= 1 && p[j] <= rows && j <= cols) match[p[j] - 1] = static_cast<int>(j - 1);
  }
  return match;
}

ObjectDiscoveryScores evaluate(const SegmentationPair& pair) {
  ObjectDiscoveryScores s;
  const auto a = ari(pair, false);
  const auto f = ari(pair, true);
  const auto b = mbo(pair);
  const auto m = miou(pair);
  s.ari = a.value;
  s.ari_fg = f.value;
  s.mbo = b.value;
  s.miou = m.value;
  s.degenerate = (a.degenerate || f.degenerate || b.degenerate || m.degenerate) ? 1 : 0;
  return s;
}

void ScoreAccumulator::add(const ObjectDiscoveryScores& s) {
  sum_.ari += s.ari;
  sum_.ari_fg += s.ari_fg;
  sum_.mbo += s.mbo;
  sum_.miou += s.miou;
  sum_.degenerate += s.degenerate;
  ++count_;
}

ObjectDiscoveryScores ScoreAccumulator::mean() const {
  ObjectDiscoveryScores m;
  if (count_ == 0) return m;
  const auto n = static_cast<double>(count_);
  m.ari = sum_.ari / n;
  m.ari_fg = sum_.ari_fg / n;
  m.mbo = sum_.mbo / n;
  m.miou = sum_.miou / n;
  m.degenerate = sum_.degenerate;
  return m;
}

UsageAccumulator::UsageAccumulator(std::vector<int64_t> radices) : radices_(std::move(radices)) {
  if (radices_.empty()) throw std::invalid_argument("usage statistics need at least one group");
  int64_t n = 1;
  for (int64_t r : radices_) {
    if (r < 1) throw std::invalid_argument("radix must be >= 1");
    group_counts_.emplace_back(static_cast<size_t>(r), 0);
    n *= r;
  }
  feature_counts_.assign(static_cast<size_t>(n), 0);
}

void UsageAccumulator::add(std::span<const int64_t> tuples) {
  const size_t g = radices_.size();
  if (tuples.size() % g != 0) throw std::invalid_argument("usage statistics: partial tuple");
  for (size_t i = 0; i < tuples.size(); i += g) {
    int64_t scalar = 0, place = 1;
    for (size_t k = 0; k < g; ++k) {
      const int64_t v = tuples[i + k];
      if (v < 0 || v >= radices_[k]) throw std::out_of_range("usage statistics: index out of radix range");
      ++group_counts_[k][static_cast<size_t>(v)];
      scalar += place * v;
      place *= radices_[k];
    }
    ++feature_counts_[static_cast<size_t>(scalar)];
    ++count_;
  }
}

namespace {

double entropy_of(const std::vector<double>& freq) {
  double h = 0.0;
  for (double p : freq) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::vector<double> normalize_counts(const std::vector<int64_t>& counts, int64_t total) {
  std::vector<double> f(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) f[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return f;
}

}  // namespace

UsageStatistics UsageAccumulator::result() const {
  if (count_ == 0) throw std::logic_error("usage statistics: empty stream");
  UsageStatistics s;
  for (const auto& counts : group_counts_) {
    s.frequency.push_back(normalize_counts(counts, count_));
    s.entropy.push_back(entropy_of(s.frequency.back()));
    s.perplexity.push_back(std::exp(s.entropy.back()));
  }
  s.feature_frequency = normalize_counts(feature_counts_, count_);
  s.feature_entropy = entropy_of(s.feature_frequency);
  s.feature_perplexity = std::exp(s.feature_entropy);
  return s;
}

std::vector<double> gaussian_smooth(std::span<const double> values, int kernel_size, double sigma) {
  if (kernel_size < 1 || kernel_size % 2 == 0) throw std::invalid_argument("kernel size must be odd and positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  const int half = kernel_size / 2;
  std::vector<double> kernel(static_cast<size_t>(kernel_size));
  for (int i = -half; i <= half; ++i) kernel[static_cast<size_t>(i + half)] = std::exp(-0.5 * i * i / (sigma * sigma));
  std::vector<double> out(values.size());
  const auto n = static_cast<int>(values.size());
  for (int t = 0; t < n; ++t) {
    double acc = 0.0, weight = 0.0;
    for (int i = -half; i <= half; ++i) {
      const int s = t + i;
      if (s < 0 || s >= n) continue;
      acc += kernel[static_cast<size_t>(i + half)] * values[static_cast<size_t>(s)];
      weight += kernel[static_cast<size_t>(i + half)];
    }
    out[static_cast<size_t>(t)] = acc / weight;
  }
  return out;
}

}  // namespace gdr::metrics

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gdr::metrics {

/// Predicted vs ground-truth label maps of equal size, flattened row-major.
/// Truth label 0 is background.
struct SegmentationPair {
  std::span<const int32_t> predicted;
  std::span<const int32_t> truth;

  void validate() const;
};

/// A score plus a flag raised when the input was degenerate (e.g. no
/// foreground) and the value was defined by convention as 0.
struct MetricValue {
  double value = 0.0;
  bool degenerate = false;
};

/// Adjusted Rand index from the contingency table. With foreground_only, only
/// pixels whose truth label is nonzero take part.
MetricValue ari(const SegmentationPair& pair, bool foreground_only);

/// Mean over ground-truth objects of the best IoU against any predicted segment.
MetricValue mbo(const SegmentationPair& pair);

/// Mean IoU over ground-truth objects after the one-to-one matching of
/// predicted segments to objects that maximizes total IoU. Unmatched objects
/// score 0.
MetricValue miou(const SegmentationPair& pair);

/// Maximum-weight assignment on a (rows x cols) score matrix. Returns, for
/// each row, the matched column or -1. Hungarian algorithm, O(n^3).
std::vector<int> max_weight_assignment(const std::vector<std::vector<double>>& score);

struct ObjectDiscoveryScores {
  double ari = 0.0;
  double ari_fg = 0.0;
  double mbo = 0.0;
  double miou = 0.0;
  int degenerate = 0;  // images with a degenerate-flagged metric
};

ObjectDiscoveryScores evaluate(const SegmentationPair& pair);

/// Running per-image average of ObjectDiscoveryScores.
class ScoreAccumulator {
 public:
  void add(const ObjectDiscoveryScores& scores);
  ObjectDiscoveryScores mean() const;
  int64_t count() const { return count_; }

 private:
  ObjectDiscoveryScores sum_;
  int64_t count_ = 0;
};

struct UsageStatistics {
  std::vector<std::vector<double>> frequency;  // per group, per code
  std::vector<double> entropy;                 // per group, nats
  std::vector<double> perplexity;              // per group, exp(entropy)
  std::vector<double> feature_frequency;       // per scalar index
  double feature_entropy = 0.0;
  double feature_perplexity = 0.0;
};

/// Code-usage histogram over a stream of tuple index maps.
class UsageAccumulator {
 public:
  explicit UsageAccumulator(std::vector<int64_t> radices);

  /// `tuples` holds N consecutive g-tuples.
  void add(std::span<const int64_t> tuples);
  int64_t count() const { return count_; }
  UsageStatistics result() const;

 private:
  std::vector<int64_t> radices_;
  std::vector<std::vector<int64_t>> group_counts_;
  std::vector<int64_t> feature_counts_;
  int64_t count_ = 0;
};

/// Normalized Gaussian smoothing with edge renormalization.
std::vector<double> gaussian_smooth(std::span<const double> values, int kernel_size = 5, double sigma = 1.0);

}  // namespace gdr::metrics

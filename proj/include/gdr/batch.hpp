#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "gdr/datagen.hpp"

namespace gdr {

/// In-memory image/mask store for training.
struct ImageBank {
  torch::Tensor images;  // (N, H, W, 3) uint8
  torch::Tensor masks;   // (N, H, W) int32

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
  /// (B, H, W, 3) float in [0, 1].
  torch::Tensor images_float(const std::vector<int64_t>& indexes) const;
  torch::Tensor masks_at(const std::vector<int64_t>& indexes) const;

  static ImageBank from_dataset(const data::Dataset& dataset);
  static ImageBank from_samples(const std::vector<data::SceneSample>& samples);
};

/// Shuffled mini-batches, reshuffled every epoch from (seed, epoch).
class BatchSampler {
 public:
  BatchSampler(int64_t dataset_size, int64_t batch_size, uint64_t seed);
  std::vector<int64_t> next();
  int64_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  int64_t size_;
  int64_t batch_;
  uint64_t seed_;
  int64_t epoch_ = -1;
  size_t cursor_ = 0;
  std::vector<int64_t> order_;
};

/// Contiguous index ranges [0, n) split into chunks of at most `batch`.
std::vector<std::vector<int64_t>> sequential_batches(int64_t n, int64_t batch);

}  // namespace gdr

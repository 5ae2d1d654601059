#include "gdr/batch.hpp"

#include <algorithm>
#include <numeric>

#include "gdr/rng.hpp"

namespace gdr {

torch::Tensor ImageBank::images_float(const std::vector<int64_t>& indexes) const {
  const auto idx = torch::tensor(indexes, torch::kInt64);
  return images.index_select(0, idx).to(torch::kFloat32).div_(255.0);
}

torch::Tensor ImageBank::masks_at(const std::vector<int64_t>& indexes) const {
  return masks.index_select(0, torch::tensor(indexes, torch::kInt64));
}

ImageBank ImageBank::from_samples(const std::vector<data::SceneSample>& samples) {
  if (samples.empty()) throw std::invalid_argument("ImageBank: no samples");
  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t h = samples[0].height, w = samples[0].width;
  ImageBank bank;
  bank.images = torch::empty({n, h, w, 3}, torch::kUInt8);
  bank.masks = torch::empty({n, h, w}, torch::kInt32);
  for (int64_t i = 0; i < n; ++i) {
    const auto& s = samples[static_cast<size_t>(i)];
    if (s.height != h || s.width != w) throw std::invalid_argument("ImageBank: samples differ in size");
    std::memcpy(bank.images[i].data_ptr(), s.image.data(), s.image.size());
    std::memcpy(bank.masks[i].data_ptr(), s.mask.data(), s.mask.size() * sizeof(int32_t));
  }
  return bank;
}

ImageBank ImageBank::from_dataset(const data::Dataset& dataset) { return from_samples(dataset.samples); }

BatchSampler::BatchSampler(int64_t dataset_size, int64_t batch_size, uint64_t seed)
    : size_(dataset_size), batch_(batch_size), seed_(seed) {
  if (size_ < 1) throw std::invalid_argument("BatchSampler: empty dataset");
  if (batch_ < 1) throw std::invalid_argument("BatchSampler: batch size must be >= 1");
  reshuffle();
}

void BatchSampler::reshuffle() {
  ++epoch_;
  order_.resize(static_cast<size_t>(size_));
  std::iota(order_.begin(), order_.end(), 0);
  std::mt19937_64 rng(derive_seed(seed_, static_cast<uint64_t>(epoch_)));
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

std::vector<int64_t> BatchSampler::next() {
  std::vector<int64_t> out;
  while (static_cast<int64_t>(out.size()) < batch_) {
    if (cursor_ == order_.size()) {
      reshuffle();
      if (!out.empty() && batch_ >= size_) break;
    }
    out.push_back(order_[cursor_++]);
  }
  return out;
}

std::vector<std::vector<int64_t>> sequential_batches(int64_t n, int64_t batch) {
  std::vector<std::vector<int64_t>> out;
  for (int64_t start = 0; start < n; start += batch) {
    std::vector<int64_t> b;
    for (int64_t i = start; i < std::min(n, start + batch); ++i) b.push_back(i);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace gdr

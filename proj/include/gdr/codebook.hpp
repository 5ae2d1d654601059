#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace gdr {

/// Per-super-pixel tuple code indexes. `indexes` has shape (..., g) with the
/// group axis last; entry k lies in [0, radices[k]).
struct TupleIndexMap {
  torch::Tensor indexes;
  std::vector<int64_t> radices;
};

/// Per-super-pixel scalar code indexes in [0, radix_product).
struct ScalarIndexMap {
  torch::Tensor indexes;
  int64_t radix_product = 0;
};

/// Product of radices; throws std::overflow_error if it does not fit in int64.
int64_t radix_product(const std::vector<int64_t>& radices);

/// Mixed-radix little-endian encoding: group 0 is the least significant place.
ScalarIndexMap tuple_to_scalar(const TupleIndexMap& tuple);
TupleIndexMap scalar_to_tuple(const ScalarIndexMap& scalar, const std::vector<int64_t>& radices);

/// g attribute-level codebooks. Group k holds `group_sizes[k]` codes of width
/// `group_dims[k]`; concatenating one code per group yields a feature-level
/// code, so the effective codebook has prod(group_sizes) entries.
class GroupedCodebookImpl : public torch::nn::Module {
 public:
  GroupedCodebookImpl(std::vector<int64_t> group_sizes, std::vector<int64_t> group_dims,
                      double init_scale = 0.02, uint64_t seed = 0);

  int64_t num_groups() const { return static_cast<int64_t>(group_sizes_.size()); }
  const std::vector<int64_t>& group_sizes() const { return group_sizes_; }
  const std::vector<int64_t>& group_dims() const { return group_dims_; }
  int64_t effective_size() const { return effective_size_; }
  int64_t total_width() const { return total_width_; }

  /// Codes of group k, shape (a_k, d_k).
  const torch::Tensor& codes(int64_t k) const { return codes_.at(static_cast<size_t>(k)); }
  torch::Tensor& codes(int64_t k) { return codes_.at(static_cast<size_t>(k)); }

  /// Splits a (..., total_width) tensor into per-group channel slices.
  std::vector<torch::Tensor> split_groups(const torch::Tensor& features) const;

 private:
  std::vector<int64_t> group_sizes_;
  std::vector<int64_t> group_dims_;
  int64_t effective_size_ = 0;
  int64_t total_width_ = 0;
  std::vector<torch::Tensor> codes_;
};
TORCH_MODULE(GroupedCodebook);

/// Builds a codebook with codes drawn i.i.d. from N(0, init_scale^2), seeded.
GroupedCodebook new_grouped_codebook(std::vector<int64_t> group_sizes, std::vector<int64_t> group_dims,
                                     double init_scale = 0.02, uint64_t seed = 0);

/// output[..., :] = concat_k codes(k)[t[..., k]]. Pure lookup.
torch::Tensor select_codes(const GroupedCodebookImpl& cb, const TupleIndexMap& tuple);

/// All n feature-level codes, row s = select_codes at scalar_to_tuple(s).
/// Test oracle only; refuses n > cap.
torch::Tensor product_codebook(const GroupedCodebookImpl& cb, int64_t cap = 65536);

struct ParameterAccounting {
  int64_t codebook_params = 0;    // sum_k a_k * d_k
  int64_t projection_params = 0;  // proj_width * base_c
  int64_t grouped_params = 0;     // codebook + projection
  int64_t nongrouped_params = 0;  // n * base_c
  double ratio = 0.0;             // grouped / nongrouped
};

ParameterAccounting parameter_accounting(const GroupedCodebookImpl& cb, int64_t proj_width,
                                         int64_t base_c);

/// Multiply-accumulate counts per super-pixel for code matching.
struct ComputeAccounting {
  int64_t grouped = 0;     // 2 * proj_width * base_c + sum_k a_k * d_k
  int64_t nongrouped = 0;  // base_c * n
};

ComputeAccounting compute_accounting(const GroupedCodebookImpl& cb, int64_t proj_width,
                                     int64_t base_c);

}  // namespace gdr

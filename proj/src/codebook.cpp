#include "gdr/codebook.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "gdr/rng.hpp"

namespace gdr {

int64_t radix_product(const std::vector<int64_t>& radices) {
  int64_t n = 1;
  for (int64_t r : radices) {
    if (r < 1) throw std::invalid_argument("radix must be >= 1, got " + std::to_string(r));
    if (n > std::numeric_limits<int64_t>::max() / r) throw std::overflow_error("radix product overflows int64");
    n *= r;
  }
  return n;
}

namespace {

torch::Tensor place_values(const std::vector<int64_t>& radices) {
  std::vector<int64_t> places(radices.size());
  int64_t place = 1;
  for (size_t k = 0; k < radices.size(); ++k) {
    places[k] = place;
    place *= radices[k];
  }
  return torch::tensor(places, torch::kInt64);
}

}  // namespace

ScalarIndexMap tuple_to_scalar(const TupleIndexMap& tuple) {
  const auto g = static_cast<int64_t>(tuple.radices.size());
  if (g == 0) throw std::invalid_argument("tuple_to_scalar: empty radices");
  const auto& t = tuple.indexes;
  if (t.dim() < 1 || t.size(-1) != g) throw std::invalid_argument("tuple_to_scalar: last axis must equal number of groups");
  const int64_t n = radix_product(tuple.radices);

  auto idx = t.to(torch::kInt64);
  auto radices = torch::tensor(tuple.radices, torch::kInt64);
  if (idx.numel() > 0) {
    if ((idx < 0).any().item<bool>() || (idx >= radices).any().item<bool>()) {
      throw std::out_of_range("tuple_to_scalar: index out of radix range");
    }
  }
  auto scalar = (idx * place_values(tuple.radices)).sum(-1);
  return {scalar, n};
}

TupleIndexMap scalar_to_tuple(const ScalarIndexMap& scalar, const std::vector<int64_t>& radices) {
  if (radices.empty()) throw std::invalid_argument("scalar_to_tuple: empty radices");
  const int64_t n = radix_product(radices);
  auto s = scalar.indexes.to(torch::kInt64);
  if (s.numel() > 0 && ((s < 0).any().item<bool>() || (s >= n).any().item<bool>())) {
    throw std::out_of_range("scalar_to_tuple: scalar index out of range");
  }
  std::vector<torch::Tensor> digits;
  digits.reserve(radices.size());
  auto rest = s;
  for (int64_t r : radices) {
    digits.push_back(torch::remainder(rest, r));
    rest = torch::div(rest, r, "floor");
  }
  return {torch::stack(digits, -1), radices};
}

GroupedCodebookImpl::GroupedCodebookImpl(std::vector<int64_t> group_sizes,
                                         std::vector<int64_t> group_dims, double init_scale,
                                         uint64_t seed)
    : group_sizes_(std::move(group_sizes)), group_dims_(std::move(group_dims)) {
  if (group_sizes_.empty() || group_dims_.empty()) {
    throw std::invalid_argument("grouped codebook needs at least one group");
  }
  if (group_sizes_.size() != group_dims_.size()) {
    throw std::invalid_argument("group_sizes and group_dims differ in length");
  }
  if (!(init_scale > 0.0)) throw std::invalid_argument("init_scale must be positive");
  for (size_t k = 0; k < group_sizes_.size(); ++k) {
    if (group_sizes_[k] < 1 || group_dims_[k] < 1) {
      throw std::invalid_argument("group sizes and dims must be >= 1");
    }
  }
  effective_size_ = radix_product(group_sizes_);
  total_width_ = 0;
  for (int64_t d : group_dims_) total_width_ += d;

  auto gen = make_generator(seed);
  for (size_t k = 0; k < group_sizes_.size(); ++k) {
    auto init = torch::randn({group_sizes_[k], group_dims_[k]}, gen, torch::kFloat32) * init_scale;
    codes_.push_back(register_parameter("codes_" + std::to_string(k), init));
  }
}

GroupedCodebook new_grouped_codebook(std::vector<int64_t> group_sizes, std::vector<int64_t> group_dims,
                                     double init_scale, uint64_t seed) {
  return GroupedCodebook(std::move(group_sizes), std::move(group_dims), init_scale, seed);
}

std::vector<torch::Tensor> GroupedCodebookImpl::split_groups(const torch::Tensor& features) const {
  if (features.dim() < 1 || features.size(-1) != total_width_) {
    throw std::invalid_argument("split_groups: channel width " +
                                std::to_string(features.dim() ? features.size(-1) : 0) +
                                " does not match codebook width " + std::to_string(total_width_));
  }
  return features.split_with_sizes(group_dims_, -1);
}

torch::Tensor select_codes(const GroupedCodebookImpl& cb, const TupleIndexMap& tuple) {
  if (tuple.radices != cb.group_sizes()) throw std::invalid_argument("select_codes: radix mismatch");
  const auto& t = tuple.indexes;
  if (t.dim() < 1 || t.size(-1) != cb.num_groups()) {
    throw std::invalid_argument("select_codes: group axis mismatch");
  }
  auto idx = t.to(torch::kInt64);
  std::vector<torch::Tensor> parts;
  parts.reserve(static_cast<size_t>(cb.num_groups()));
  for (int64_t k = 0; k < cb.num_groups(); ++k) {
    auto ik = idx.select(-1, k);
    if (ik.numel() > 0 && ((ik < 0).any().item<bool>() || (ik >= cb.group_sizes()[k]).any().item<bool>())) {
      throw std::out_of_range("select_codes: index out of range for group " + std::to_string(k));
    }
    auto rows = cb.codes(k).index_select(0, ik.reshape({-1}));
    std::vector<int64_t> shape(ik.sizes().begin(), ik.sizes().end());
    shape.push_back(cb.group_dims()[k]);
    parts.push_back(rows.reshape(shape));
  }
  return torch::cat(parts, -1);
}

torch::Tensor product_codebook(const GroupedCodebookImpl& cb, int64_t cap) {
  const int64_t n = cb.effective_size();
  if (n > cap) {
    throw std::length_error("product_codebook: n=" + std::to_string(n) + " exceeds cap " + std::to_string(cap));
  }
  ScalarIndexMap all{torch::arange(n, torch::kInt64), n};
  return select_codes(cb, scalar_to_tuple(all, cb.group_sizes()));
}

ParameterAccounting parameter_accounting(const GroupedCodebookImpl& cb, int64_t proj_width,
                                         int64_t base_c) {
  ParameterAccounting acc;
  for (int64_t k = 0; k < cb.num_groups(); ++k) acc.codebook_params += cb.group_sizes()[k] * cb.group_dims()[k];
  acc.projection_params = proj_width * base_c;
  acc.grouped_params = acc.codebook_params + acc.projection_params;
  acc.nongrouped_params = cb.effective_size() * base_c;
  acc.ratio = static_cast<double>(acc.grouped_params) / static_cast<double>(acc.nongrouped_params);
  return acc;
}

ComputeAccounting compute_accounting(const GroupedCodebookImpl& cb, int64_t proj_width,
                                     int64_t base_c) {
  ComputeAccounting acc;
  acc.grouped = 2 * proj_width * base_c;
  for (int64_t k = 0; k < cb.num_groups(); ++k) acc.grouped += cb.group_sizes()[k] * cb.group_dims()[k];
  acc.nongrouped = base_c * cb.effective_size();
  return acc;
}

}  // namespace gdr

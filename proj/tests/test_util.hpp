#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <torch/torch.h>

namespace gdr::testing {

/// Central finite differences of a scalar function of one tensor (double).
inline torch::Tensor finite_difference(const std::function<double(const torch::Tensor&)>& fn,
                                       const torch::Tensor& at, double h = 1e-6) {
  auto x = at.detach().clone().to(torch::kFloat64);
  auto grad = torch::zeros_like(x);
  auto flat = x.view({-1});
  auto gflat = grad.view({-1});
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double orig = flat[i].item<double>();
    flat[i] = orig + h;
    const double up = fn(x);
    flat[i] = orig - h;
    const double down = fn(x);
    flat[i] = orig;
    gflat[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

/// max |a - b| / max |b|.
inline double relative_error(const torch::Tensor& a, const torch::Tensor& b) {
  const double denom = std::max(b.abs().max().item<double>(), 1e-12);
  return (a - b).abs().max().item<double>() / denom;
}

}  // namespace gdr::testing

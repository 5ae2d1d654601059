#pragma once

#include <vector>

#include <torch/torch.h>

#include "gdr/quantizer.hpp"
#include "gdr/rng.hpp"
#include "test_util.hpp"

namespace gdr::testing {

inline QuantizerConfig small_config(QuantizerMode mode, ProjectionKind projection, std::vector<int64_t> sizes,
                                    int64_t base_c, int64_t expansion) {
  QuantizerConfig cfg;
  cfg.mode = mode;
  cfg.projection = projection;
  cfg.group_sizes = std::move(sizes);
  cfg.base_channels = base_c;
  cfg.expansion_rate = expansion;
  return cfg;
}

// A plain non-grouped VQ quantizer: nearest code (optionally Gumbel-perturbed).
inline torch::Tensor reference_nongrouped(const torch::Tensor& z, const torch::Tensor& codes, torch::Generator* gen,
                                          double tau, bool noise, torch::Tensor* index) {
  auto d = (z.pow(2).sum(-1, true) - 2.0 * z.matmul(codes.transpose(0, 1)) + codes.pow(2).sum(-1)).clamp_min(0.0);
  auto logits = -d;
  if (noise) {
    auto u = torch::rand(d.sizes(), *gen, d.options());
    logits = logits + -torch::log((-torch::log(u.clamp_min(1e-20))).clamp_min(1e-20));
  }
  logits = logits / tau;
  *index = logits.argmax(-1);
  return codes.index_select(0, index->flatten()).reshape(z.sizes());
}

// A 2x2x4 instance in double precision with two 3-code groups.
struct GradCase {
  Quantizer q{nullptr};
  torch::Tensor z0;
  torch::Tensor weights;
};

inline GradCase make_grad_case(QuantizerMode mode) {
  auto cfg = small_config(mode, ProjectionKind::Invertible, {3, 3}, 4, 2);
  GradCase gc;
  gc.q = Quantizer(cfg, 31);
  gc.q->to(torch::kFloat64);
  gc.z0 = torch::randn({1, 2, 2, 4}, make_generator(6), torch::kFloat64);
  gc.weights = torch::randn({1, 2, 2, 4}, make_generator(7), torch::kFloat64);
  return gc;
}

// Relative error of the soft (Gumbel) path gradient of a linear readout.
inline double soft_path_gradient_error() {
  auto gc = make_grad_case(QuantizerMode::DVAE);
  auto loss_at = [&](const torch::Tensor& z) {
    auto gen = make_generator(55);
    auto out = gc.q->forward(z, {0.3, 0.8, true, &gen});
    return (out.decoder_input * gc.weights).sum();
  };
  auto z = gc.z0.clone().requires_grad_(true);
  loss_at(z).backward();
  torch::NoGradGuard ng;
  auto fd = finite_difference([&](const torch::Tensor& x) { return loss_at(x).item<double>(); }, gc.z0);
  return relative_error(z.grad(), fd);
}

// Relative error of the straight-through gradient against the exact
// derivative of its surrogate (codes held fixed, gradient passed to Z_plus).
inline double straight_through_gradient_error() {
  auto gc = make_grad_case(QuantizerMode::VQVAE);
  const double alpha = 0.3;
  auto z = gc.z0.clone().requires_grad_(true);
  auto gen = make_generator(56);
  auto out = gc.q->forward(z, {alpha, 1.0, true, &gen});
  (out.X * gc.weights).sum().backward();

  torch::NoGradGuard ng;
  auto hard0 = select_codes(*gc.q->codebook(), out.X_tuple);
  auto z_plus0 = gc.q->projection()->project_up(gc.z0);
  auto surrogate = [&](const torch::Tensor& x) {
    auto z_plus = gc.q->projection()->project_up(x);
    auto x_plus = z_plus - z_plus0 + hard0;
    return (gc.q->post_process(x_plus, z_plus, alpha) * gc.weights).sum().item<double>();
  };
  auto fd = finite_difference(surrogate, gc.z0);
  return relative_error(z.grad(), fd);
}

inline double utilization_gradient_error() {
  auto gc = make_grad_case(QuantizerMode::VQVAE);
  auto loss_at = [&](const torch::Tensor& z) {
    auto gen = make_generator(57);
    return gc.q->forward(z, {0.0, 0.5, true, &gen}).utilization_loss;
  };
  auto z = gc.z0.clone().requires_grad_(true);
  loss_at(z).backward();
  torch::NoGradGuard ng;
  auto fd = finite_difference([&](const torch::Tensor& x) { return loss_at(x).item<double>(); }, gc.z0);
  return relative_error(z.grad(), fd);
}

}  // namespace gdr::testing

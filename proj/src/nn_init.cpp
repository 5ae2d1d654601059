#include "gdr/nn_init.hpp"

#include <cmath>

namespace gdr {

namespace {

void fill_uniform(torch::Tensor& t, double bound, torch::Generator& gen) {
  if (!t.defined()) return;
  t.uniform_(-bound, bound, gen);
}

void reset_one(torch::nn::Module& m, torch::Generator& gen) {
    if (auto* lin = m.as<torch::nn::Linear>()) {
      const double b = 1.0 / std::sqrt(static_cast<double>(lin->weight.size(1)));
      fill_uniform(lin->weight, b, gen);
      fill_uniform(lin->bias, b, gen);
  } else if (auto* conv = m.as<torch::nn::Conv2d>()) {
      const double b = 1.0 / std::sqrt(static_cast<double>(conv->weight[0].numel()));
      fill_uniform(conv->weight, b, gen);
      fill_uniform(conv->bias, b, gen);
  } else if (auto* deconv = m.as<torch::nn::ConvTranspose2d>()) {
      // weight is (in, out, kh, kw); fan_in follows the output-channel axis.
      const auto& w = deconv->weight;
      const double b = 1.0 / std::sqrt(static_cast<double>(w.size(1) * w.size(2) * w.size(3)));
      fill_uniform(deconv->weight, b, gen);
      fill_uniform(deconv->bias, b, gen);
  } else if (auto* gru = m.as<torch::nn::GRUCell>()) {
      const double b = 1.0 / std::sqrt(static_cast<double>(gru->options.hidden_size()));
      fill_uniform(gru->weight_ih, b, gen);
      fill_uniform(gru->weight_hh, b, gen);
      fill_uniform(gru->bias_ih, b, gen);
      fill_uniform(gru->bias_hh, b, gen);
  }
}

}  // namespace

void reset_parameters(torch::nn::Module& module, torch::Generator& gen) {
  torch::NoGradGuard guard;
  reset_one(module, gen);
  // include_self=false: the root may not be held by a shared_ptr yet.
  for (const auto& m : module.modules(/*include_self=*/false)) reset_one(*m, gen);
}

}  // namespace gdr

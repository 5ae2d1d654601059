#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include <torch/torch.h>

#include "gdr/batch.hpp"
#include "gdr/metrics.hpp"
#include "gdr/quantizer.hpp"

namespace gdr {

struct VaeConfig {
  QuantizerConfig quantizer;
  int64_t hidden = 64;
  void validate() const;
};

/// Conv encoder (strides 2,2,1,1) -> grouped quantizer -> transposed-conv
/// decoder. All tensors are channels-last.
class VaeModelImpl : public torch::nn::Module {
 public:
  VaeModelImpl(VaeConfig config, uint64_t seed = 0);

  const VaeConfig& config() const { return config_; }
  Quantizer& quantizer() { return quantizer_; }

  /// (B, H, W, 3) or (H, W, 3) images in [0, 1] -> (.., H/4, W/4, base_c).
  torch::Tensor encode(const torch::Tensor& images);
  /// (.., h, w, base_c) -> (.., 4h, 4w, 3).
  torch::Tensor decode(const torch::Tensor& rep);

  struct Output {
    torch::Tensor Z;
    QuantizerOutput q;
    torch::Tensor reconstruction;
  };
  Output forward(const torch::Tensor& images, const QuantizeContext& ctx = {});

  /// Inference-time discrete representation (no noise, no residual).
  QuantizerOutput represent(const torch::Tensor& images);

 private:
  VaeConfig config_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Sequential decoder_{nullptr};
  Quantizer quantizer_{nullptr};
};
TORCH_MODULE(VaeModel);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainOptions {
  int64_t steps = 15000;
  int64_t batch_size = 32;
  double learning_rate = 3e-4;
  bool gumbel_noise = true;
  bool temperature_decay = false;
  int64_t log_every = 100;
  uint64_t seed = 0;
};

struct PretrainRecord {
  int64_t step = 0;  // steps completed
  double reconstruction = 0.0;
  double utilization = 0.0;
  double vq = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
  std::vector<double> perplexity;  // per group over the logging window
};

struct PretrainReport {
  std::vector<PretrainRecord> records;
};

/// Adam on MSE + utilization_weight * l_u (+ VQ terms). The residual weight
/// follows ResidualSchedule over `steps`. Throws DivergenceError on a
/// non-finite loss.
PretrainReport pretrain(VaeModel& model, const ImageBank& data, const PretrainOptions& options,
                        const std::function<void(const PretrainRecord&)>& on_record = {});

/// Mean reconstruction MSE and code usage over a bank at inference settings.
struct VaeEvaluation {
  double reconstruction = 0.0;
  metrics::UsageStatistics usage;
};
VaeEvaluation evaluate_vae(VaeModel& model, const ImageBank& data, int64_t batch_size = 64);

}  // namespace gdr

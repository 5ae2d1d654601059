#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "gdr/codebook.hpp"

namespace gdr {

enum class QuantizerMode { DVAE, VQVAE };

std::string to_string(QuantizerMode mode);
QuantizerMode parse_quantizer_mode(const std::string& text);

/// How the continuous representation reaches the grouped codebook.
///   None        - groups are direct channel slices of Z (naive grouping)
///   Invertible  - Z * pinv(W) up, X_plus * W down (channel organizing)
///   Independent - Z * U up with U a separate learnable matrix, X_plus * W down
enum class ProjectionKind { None, Invertible, Independent };

std::string to_string(ProjectionKind kind);
ProjectionKind parse_projection_kind(const std::string& text);

struct QuantizerConfig {
  QuantizerMode mode = QuantizerMode::VQVAE;
  double temperature = 1.0;
  double epsilon = 1e-5;
  int64_t base_channels = 32;
  int64_t expansion_rate = 8;  // one of {1, 2, 4, 8}
  std::vector<int64_t> group_sizes{8, 8};
  ProjectionKind projection = ProjectionKind::Invertible;
  bool residual_enabled = true;
  bool final_normalize = true;
  double utilization_weight = 0.1;
  double codebook_weight = 1.0;
  double commitment_weight = 0.25;
  double code_init_scale = 0.02;
  double rank_threshold = 1e-6;

  bool organize_channels() const { return projection != ProjectionKind::None; }
  /// Channels seen by the codebook: expansion_rate * base_channels when
  /// organizing, base_channels otherwise.
  int64_t grouped_width() const;
  /// Even split of grouped_width() across groups; throws if indivisible.
  std::vector<int64_t> group_dims() const;
  void validate() const;
};

/// Learnable down-projection W (expanded x base). Project-up uses pinv(W), or a
/// separate matrix U when built as Independent.
class InvertibleProjectionImpl : public torch::nn::Module {
 public:
  InvertibleProjectionImpl(int64_t base_channels, int64_t expanded_channels, bool independent_up,
                           uint64_t seed = 0, double rank_threshold = 1e-6);

  int64_t base_channels() const { return base_; }
  int64_t expanded_channels() const { return expanded_; }
  bool independent_up() const { return independent_; }

  /// (base, expanded). Differentiable in W while grad mode is on; cached per
  /// parameter version otherwise.
  torch::Tensor up_matrix();
  torch::Tensor pinv();

  torch::Tensor project_up(const torch::Tensor& z);
  torch::Tensor project_down(const torch::Tensor& x_plus);

  /// Smallest singular value of W.
  double min_singular_value() const;
  /// Rank guard: re-initializes W from fresh Gaussian noise when its smallest
  /// singular value falls below the threshold. Returns true if it did.
  bool ensure_full_rank(uint64_t reseed);
  /// max |pinv(W) W - I|.
  double pinv_identity_error();

  torch::Tensor W;
  torch::Tensor U;  // only for independent_up

 private:
  int64_t base_;
  int64_t expanded_;
  bool independent_;
  double rank_threshold_;
  torch::Tensor cached_pinv_;
  int64_t cached_version_ = -1;
};
TORCH_MODULE(InvertibleProjection);

/// Cosine annealing of the residual weight from 0.5 to 0 across the first
/// half of pretraining; 0 afterwards and at inference.
struct ResidualSchedule {
  int64_t total_pretrain_steps = 1;
  double alpha(int64_t step) const;
};

/// tau(step) = start * (end/start)^(step/total), or constant start when disabled.
struct TemperatureSchedule {
  double start = 1.0;
  double end = 0.1;
  int64_t total_steps = 1;
  bool decay = false;
  double tau(int64_t step) const;
};

/// Per-call quantizer settings.
struct QuantizeContext {
  double alpha = 0.0;
  std::optional<double> temperature;  // falls back to config temperature
  bool noise_enabled = false;
  torch::Generator* generator = nullptr;  // required when noise_enabled
};

struct QuantizerOutput {
  torch::Tensor X;                     // (..., base_c) discrete representation
  torch::Tensor decoder_input;         // X in VQVAE mode; post-processed soft mixture in DVAE mode
  TupleIndexMap X_tuple;               // (..., g)
  ScalarIndexMap X_scalar;             // (...)
  std::vector<torch::Tensor> D_soft;   // per group (..., a_k)
  torch::Tensor Z_soft;                // (..., sum d_k), DVAE only
  torch::Tensor Z_plus;                // (..., sum d_k) grouped-space continuous input
  torch::Tensor utilization_loss;      // scalar
  torch::Tensor vq_loss;               // codebook + commitment terms, VQVAE only (zero otherwise)
};

// ---- pipeline stages ----

/// D^(k)[..., j] = |Z^(k) - C^(k)_j|^2, clamped at zero.
std::vector<torch::Tensor> grouped_distances(const std::vector<torch::Tensor>& z_groups,
                                             const GroupedCodebookImpl& cb);

/// softmax((-D + G) / tau) over the code axis, G standard Gumbel when
/// noise_enabled. When `logits_out` is given it receives (-D + G) / tau.
std::vector<torch::Tensor> gumbel_soft_weights(const std::vector<torch::Tensor>& distances, double tau,
                                               torch::Generator* generator, bool noise_enabled,
                                               std::vector<torch::Tensor>* logits_out = nullptr);

/// Per-group argmax of soft weights (lowest index on ties).
TupleIndexMap tuple_indexes(const std::vector<torch::Tensor>& soft_weights);

/// -sum_k entropy(mean over all leading axes of D_soft^(k)), natural log.
torch::Tensor utilization_loss(const std::vector<torch::Tensor>& soft_weights);

/// alpha * Z_plus + (1 - alpha) * X_plus.
torch::Tensor fuse_residual(const torch::Tensor& z_plus, const torch::Tensor& x_plus, double alpha);

/// (X - mean) / sqrt(var + eps) over the trailing `sample_dims` axes
/// (height, width, channel), population variance.
torch::Tensor final_normalize(const torch::Tensor& x, double epsilon, int64_t sample_dims = 3);

/// Forward returns `hard`, backward hands the incoming gradient to `soft` unchanged.
torch::Tensor straight_through(const torch::Tensor& soft, const torch::Tensor& hard);

/// Grouped discretization with optional channel organizing. Inputs are
/// channels-last, (H, W, c) or (B, H, W, c).
class QuantizerImpl : public torch::nn::Module {
 public:
  explicit QuantizerImpl(QuantizerConfig config, uint64_t seed = 0);

  const QuantizerConfig& config() const { return config_; }
  GroupedCodebook& codebook() { return codebook_; }
  const GroupedCodebook& codebook() const { return codebook_; }
  bool has_projection() const { return !projection_.is_empty(); }
  InvertibleProjection& projection() { return projection_; }

  QuantizerOutput forward(const torch::Tensor& z, const QuantizeContext& ctx = {});

  /// Expanded-space representation to final X: residual, project-down, normalize.
  torch::Tensor post_process(const torch::Tensor& x_plus, const torch::Tensor& z_plus, double alpha);

  /// Decodes a tuple map straight to X (no residual); used by the swap visualizer.
  torch::Tensor represent(const TupleIndexMap& tuple);

  /// Called after each optimizer step: rank guard and pinv cache refresh.
  void after_optimizer_step(uint64_t reseed);

 private:
  QuantizerConfig config_;
  GroupedCodebook codebook_{nullptr};
  InvertibleProjection projection_{nullptr};
};
TORCH_MODULE(Quantizer);

}  // namespace gdr

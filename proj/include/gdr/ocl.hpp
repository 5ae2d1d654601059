#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "gdr/batch.hpp"
#include "gdr/metrics.hpp"
#include "gdr/vae.hpp"

namespace gdr {

struct OclConfig {
  int64_t num_slots = 5;  // max objects + 1
  int64_t slot_dim = 64;
  int64_t slot_iters = 3;
  int64_t encoder_hidden = 64;
  int64_t decoder_layers = 4;
  int64_t decoder_heads = 4;
  int64_t decoder_width = 192;
  void validate() const;
};

/// Multi-head scaled dot-product attention with an optional additive mask.
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int64_t width, int64_t heads, int64_t kv_width);
  torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& memory,
                        const torch::Tensor& additive_mask = {});

 private:
  int64_t heads_;
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, o_{nullptr};
};
TORCH_MODULE(Attention);

/// Additive (T, T) mask: 0 for key <= query, -inf above the diagonal. Inputs are
/// BOS-shifted, so position t only ever sees tokens < t.
torch::Tensor causal_mask(int64_t length);

struct SlotState {
  torch::Tensor slots;      // (B, K, D)
  torch::Tensor queries;    // (B, K, D)
  torch::Tensor attention;  // (B, N, K), sums to 1 over K
  torch::Tensor masks;      // (B, N) int64 argmax slot per feature
};

class SlotAttentionImpl : public torch::nn::Module {
 public:
  SlotAttentionImpl(int64_t num_slots, int64_t input_dim, int64_t slot_dim, int64_t iterations);

  /// Learned Gaussian queries, (B, K, D).
  torch::Tensor sample_queries(int64_t batch, torch::Generator& gen);
  SlotState forward(const torch::Tensor& features, const torch::Tensor& queries);

  int64_t num_slots() const { return num_slots_; }
  int64_t iterations() const { return iterations_; }

  torch::Tensor mu, log_sigma;

 private:
  int64_t num_slots_, slot_dim_, iterations_;
  torch::nn::LayerNorm norm_inputs_{nullptr}, norm_slots_{nullptr}, norm_mlp_{nullptr};
  torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr};
  torch::nn::GRUCell gru_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(SlotAttention);

/// Pre-LN Transformer decoder over BOS-shifted discrete tokens with slots as
/// cross-attention memory; predicts the scalar code index at every position.
class TokenDecoderImpl : public torch::nn::Module {
 public:
  TokenDecoderImpl(int64_t token_dim, int64_t vocab, int64_t length, int64_t slot_dim, int64_t width,
                   int64_t layers, int64_t heads);
  /// tokens (B, T, token_dim), slots (B, K, slot_dim) -> logits (B, T, vocab).
  torch::Tensor forward(const torch::Tensor& tokens, const torch::Tensor& slots);
  int64_t vocab() const { return vocab_; }
  /// Draws BOS/position embeddings and a near-zero output head from `gen`.
  void init_embeddings(torch::Generator& gen);

 private:
  struct Layer {
    torch::nn::LayerNorm n1{nullptr}, n2{nullptr}, n3{nullptr};
    Attention self_attn{nullptr}, cross_attn{nullptr};
    torch::nn::Sequential mlp{nullptr};
  };
  int64_t vocab_, length_;
  torch::Tensor bos_, position_;
  torch::nn::Linear input_{nullptr}, head_{nullptr};
  torch::nn::LayerNorm final_norm_{nullptr};
  std::vector<Layer> layers_;
  torch::Tensor mask_;
};
TORCH_MODULE(TokenDecoder);

/// One self-attention encoder block: slots at t -> queries at t+1.
class SlotPropagatorImpl : public torch::nn::Module {
 public:
  SlotPropagatorImpl(int64_t slot_dim, int64_t heads);
  torch::Tensor forward(const torch::Tensor& slots);

 private:
  torch::nn::LayerNorm n1_{nullptr}, n2_{nullptr};
  Attention attn_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(SlotPropagator);

/// Discrete targets computed once from a frozen VAE.
struct TokenBank {
  torch::Tensor X;       // (N, h, w, c) float
  torch::Tensor scalar;  // (N, h, w) int64
  int64_t vocab = 0;
};
TokenBank tokenize(VaeModel& vae, const ImageBank& images, int64_t batch_size = 64);

class OclModelImpl : public torch::nn::Module {
 public:
  OclModelImpl(OclConfig config, int64_t image_size, int64_t token_dim, int64_t vocab, uint64_t seed = 0);

  const OclConfig& config() const { return config_; }
  int64_t grid() const { return grid_; }

  /// (B, H, W, 3) -> (B, h*w, encoder_hidden) primary features with position.
  torch::Tensor features(const torch::Tensor& images);
  SlotState slots(const torch::Tensor& images, torch::Generator& gen,
                  const std::optional<torch::Tensor>& queries = std::nullopt);

  struct Output {
    SlotState state;
    torch::Tensor logits;  // (B, T, vocab)
    torch::Tensor loss;    // mean cross-entropy
  };
  Output forward(const torch::Tensor& images, const torch::Tensor& X, const torch::Tensor& scalar,
                 torch::Generator& gen, const std::optional<torch::Tensor>& queries = std::nullopt);

  /// Clip of T frames; frame t > 0 starts from propagate(slots_{t-1}).
  std::vector<Output> forward_clip(const std::vector<torch::Tensor>& images, const std::vector<torch::Tensor>& X,
                                   const std::vector<torch::Tensor>& scalar, torch::Generator& gen);

  /// Per-pixel slot index at image resolution (nearest upsampling), (B, H, W).
  torch::Tensor pixel_masks(const SlotState& state, int64_t image_size) const;

  TokenDecoder& decoder() { return decoder_; }
  SlotAttention& slot_attention() { return slot_attention_; }
  SlotPropagator& propagator() { return propagator_; }

 private:
  OclConfig config_;
  int64_t grid_;
  torch::nn::Sequential encoder_{nullptr};
  torch::nn::Linear position_{nullptr};
  torch::nn::LayerNorm feature_norm_{nullptr};
  torch::nn::Sequential feature_mlp_{nullptr};
  torch::Tensor grid_coords_;
  SlotAttention slot_attention_{nullptr};
  TokenDecoder decoder_{nullptr};
  SlotPropagator propagator_{nullptr};
};
TORCH_MODULE(OclModel);

struct OclTrainOptions {
  int64_t steps = 30000;
  int64_t batch_size = 32;
  double learning_rate = 3e-4;
  int64_t warmup_steps = 0;
  double grad_clip = 1.0;
  int64_t eval_every = 500;
  int64_t eval_samples = 256;
  uint64_t seed = 0;
};

struct OclCurvePoint {
  int64_t step = 0;
  double loss = 0.0;  // mean training loss since the previous point
  metrics::ObjectDiscoveryScores val;
};

struct OclTrainResult {
  std::vector<OclCurvePoint> curve;
  /// ARI + ARI_fg per curve point, Gaussian smoothed (kernel 5).
  std::vector<double> smoothed_ari_sum;
};

/// Trains against a frozen VAE's discrete tokens. Throws std::logic_error if the
/// VAE parameters change and DivergenceError on a non-finite loss.
OclTrainResult train_ocl(OclModel& model, VaeModel& vae, const ImageBank& train, const ImageBank* val,
                         const OclTrainOptions& options,
                         const std::function<void(const OclCurvePoint&)>& on_point = {});

/// Object-discovery scores of the slot masks on `data` (first `limit` samples,
/// all when limit <= 0). Slot noise is drawn from `seed`.
metrics::ObjectDiscoveryScores evaluate_ocl(OclModel& model, const ImageBank& data, uint64_t seed,
                                            int64_t limit = 0, int64_t batch_size = 64);

/// Per-image scores, for reports that need the full distribution.
std::vector<metrics::ObjectDiscoveryScores> score_images(OclModel& model, const ImageBank& data, uint64_t seed,
                                                         int64_t limit = 0, int64_t batch_size = 64);

struct TransferResult {
  metrics::ObjectDiscoveryScores id;
  metrics::ObjectDiscoveryScores ood;
  double drop() const { return (id.ari + id.ari_fg) - (ood.ari + ood.ari_fg); }
};
TransferResult transfer_eval(OclModel& model, const ImageBank& id, const ImageBank& ood, uint64_t seed);

}  // namespace gdr

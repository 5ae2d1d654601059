#include "gdr/ocl.hpp"

#include <cmath>
#include <limits>

#include "gdr/module_io.hpp"
#include "gdr/nn_init.hpp"
#include "gdr/rng.hpp"

namespace gdr {

namespace nn = torch::nn;

namespace {

nn::Sequential mlp(int64_t in, int64_t hidden, int64_t out) {
  return nn::Sequential(nn::Linear(in, hidden), nn::ReLU(), nn::Linear(hidden, out));
}

}  // namespace

void OclConfig::validate() const {
  if (num_slots < 2) throw std::invalid_argument("ocl.num_slots must be >= 2");
  if (slot_dim < 1 || encoder_hidden < 1) throw std::invalid_argument("ocl widths must be >= 1");
  if (slot_iters < 1) throw std::invalid_argument("ocl.slot_iters must be >= 1");
  if (decoder_layers < 1 || decoder_heads < 1) throw std::invalid_argument("decoder layers and heads must be >= 1");
  if (decoder_width % decoder_heads != 0) throw std::invalid_argument("decoder width must divide into heads");
  if (slot_dim % decoder_heads != 0) throw std::invalid_argument("slot_dim must divide into decoder heads");
}

// ---- attention ---------------------------------------------------------------

AttentionImpl::AttentionImpl(int64_t width, int64_t heads, int64_t kv_width) : heads_(heads) {
  if (width % heads != 0) throw std::invalid_argument("attention width must divide into heads");
  q_ = register_module("q", nn::Linear(width, width));
  k_ = register_module("k", nn::Linear(kv_width, width));
  v_ = register_module("v", nn::Linear(kv_width, width));
  o_ = register_module("o", nn::Linear(width, width));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& memory,
                                     const torch::Tensor& additive_mask) {
  const int64_t b = query.size(0), t = query.size(1), s = memory.size(1);
  const int64_t width = q_->weight.size(0);
  const int64_t d = width / heads_;
  auto split = [&](const torch::Tensor& x, int64_t len) { return x.view({b, len, heads_, d}).transpose(1, 2); };
  const auto q = split(q_(query), t);
  const auto k = split(k_(memory), s);
  const auto v = split(v_(memory), s);
  auto logits = q.matmul(k.transpose(-2, -1)) / std::sqrt(static_cast<double>(d));
  if (additive_mask.defined()) logits = logits + additive_mask;
  const auto out = logits.softmax(-1).matmul(v).transpose(1, 2).reshape({b, t, width});
  return o_(out);
}

torch::Tensor causal_mask(int64_t length) {
  return torch::full({length, length}, -std::numeric_limits<float>::infinity()).triu(1);
}

// ---- slot attention ----------------------------------------------------------

SlotAttentionImpl::SlotAttentionImpl(int64_t num_slots, int64_t input_dim, int64_t slot_dim, int64_t iterations)
    : num_slots_(num_slots), slot_dim_(slot_dim), iterations_(iterations) {
  mu = register_parameter("mu", torch::zeros({1, 1, slot_dim}));
  log_sigma = register_parameter("log_sigma", torch::zeros({1, 1, slot_dim}));
  norm_inputs_ = register_module("norm_inputs", nn::LayerNorm(nn::LayerNormOptions({input_dim})));
  norm_slots_ = register_module("norm_slots", nn::LayerNorm(nn::LayerNormOptions({slot_dim})));
  norm_mlp_ = register_module("norm_mlp", nn::LayerNorm(nn::LayerNormOptions({slot_dim})));
  q_ = register_module("q", nn::Linear(nn::LinearOptions(slot_dim, slot_dim).bias(false)));
  k_ = register_module("k", nn::Linear(nn::LinearOptions(input_dim, slot_dim).bias(false)));
  v_ = register_module("v", nn::Linear(nn::LinearOptions(input_dim, slot_dim).bias(false)));
  gru_ = register_module("gru", nn::GRUCell(slot_dim, slot_dim));
  mlp_ = register_module("mlp", mlp(slot_dim, 2 * slot_dim, slot_dim));
}

torch::Tensor SlotAttentionImpl::sample_queries(int64_t batch, torch::Generator& gen) {
  const auto noise = at::randn({batch, num_slots_, slot_dim_}, gen, mu.options());
  return mu + log_sigma.exp() * noise;
}

SlotState SlotAttentionImpl::forward(const torch::Tensor& features, const torch::Tensor& queries) {
  if (!torch::isfinite(features).all().item<bool>()) throw std::domain_error("slot attention: non-finite features");
  const int64_t b = features.size(0), k = queries.size(1);
  const auto x = norm_inputs_(features);
  const auto keys = k_(x);
  const auto values = v_(x);
  const double scale = 1.0 / std::sqrt(static_cast<double>(slot_dim_));
  SlotState state;
  state.queries = queries;
  auto slots = queries;
  torch::Tensor attn;
  for (int64_t it = 0; it < iterations_; ++it) {
    const auto prev = slots;
    const auto q = q_(norm_slots_(slots));
    attn = (keys.matmul(q.transpose(1, 2)) * scale).softmax(-1);  // (B, N, K): softmax over slots
    const auto weights = (attn + 1e-8) / (attn + 1e-8).sum(1, true);
    const auto updates = weights.transpose(1, 2).matmul(values);  // (B, K, D)
    slots = gru_(updates.reshape({b * k, slot_dim_}), prev.reshape({b * k, slot_dim_})).view({b, k, slot_dim_});
    slots = slots + mlp_->forward(norm_mlp_(slots));
  }
  state.slots = slots;
  state.attention = attn;
  state.masks = attn.argmax(-1);
  return state;
}

// ---- token decoder -------------------------------------------------------------

TokenDecoderImpl::TokenDecoderImpl(int64_t token_dim, int64_t vocab, int64_t length, int64_t slot_dim, int64_t width,
                                   int64_t layers, int64_t heads)
    : vocab_(vocab), length_(length) {
  bos_ = register_parameter("bos", torch::zeros({1, 1, width}));
  position_ = register_parameter("position", torch::zeros({1, length, width}));
  input_ = register_module("input", nn::Linear(token_dim, width));
  for (int64_t i = 0; i < layers; ++i) {
    const auto n = "layer" + std::to_string(i) + "_";
    Layer l;
    l.n1 = register_module(n + "n1", nn::LayerNorm(nn::LayerNormOptions({width})));
    l.self_attn = register_module(n + "self_attn", Attention(width, heads, width));
    l.n2 = register_module(n + "n2", nn::LayerNorm(nn::LayerNormOptions({width})));
    l.cross_attn = register_module(n + "cross_attn", Attention(width, heads, slot_dim));
    l.n3 = register_module(n + "n3", nn::LayerNorm(nn::LayerNormOptions({width})));
    l.mlp = register_module(n + "mlp", mlp(width, 4 * width, width));
    layers_.push_back(l);
  }
  final_norm_ = register_module("final_norm", nn::LayerNorm(nn::LayerNormOptions({width})));
  head_ = register_module("head", nn::Linear(width, vocab));
  mask_ = register_buffer("mask", causal_mask(length));
}

void TokenDecoderImpl::init_embeddings(torch::Generator& gen) {
  torch::NoGradGuard guard;
  bos_.normal_(0.0, 0.02, gen);
  position_.normal_(0.0, 0.02, gen);
  // Small head so initial predictions are close to uniform.
  head_->weight.normal_(0.0, 0.02, gen);
  head_->bias.zero_();
}

torch::Tensor TokenDecoderImpl::forward(const torch::Tensor& tokens, const torch::Tensor& slots) {
  if (tokens.dim() != 3 || tokens.size(1) != length_) {
    throw std::invalid_argument("token decoder: expected (B, " + std::to_string(length_) + ", c) tokens");
  }
  const int64_t b = tokens.size(0);
  auto h = torch::cat({bos_.expand({b, 1, bos_.size(2)}), input_(tokens.narrow(1, 0, length_ - 1))}, 1) + position_;
  for (auto& l : layers_) {
    const auto n = l.n1(h);
    h = h + l.self_attn(n, n, mask_);
    h = h + l.cross_attn(l.n2(h), slots);
    h = h + l.mlp->forward(l.n3(h));
  }
  return head_(final_norm_(h));
}

// ---- slot propagation ----------------------------------------------------------

SlotPropagatorImpl::SlotPropagatorImpl(int64_t slot_dim, int64_t heads) {
  n1_ = register_module("n1", nn::LayerNorm(nn::LayerNormOptions({slot_dim})));
  attn_ = register_module("attn", Attention(slot_dim, heads, slot_dim));
  n2_ = register_module("n2", nn::LayerNorm(nn::LayerNormOptions({slot_dim})));
  mlp_ = register_module("mlp", mlp(slot_dim, 2 * slot_dim, slot_dim));
}

torch::Tensor SlotPropagatorImpl::forward(const torch::Tensor& slots) {
  const auto n = n1_(slots);
  auto h = slots + attn_(n, n);
  return h + mlp_->forward(n2_(h));
}

// ---- tokens ----------------------------------------------------------------------

TokenBank tokenize(VaeModel& vae, const ImageBank& images, int64_t batch_size) {
  torch::NoGradGuard guard;
  vae->eval();
  std::vector<torch::Tensor> xs, scalars;
  int64_t vocab = 0;
  for (const auto& idx : sequential_batches(images.size(), batch_size)) {
    auto q = vae->represent(images.images_float(idx));
    xs.push_back(q.X.detach());
    scalars.push_back(q.X_scalar.indexes);
    vocab = q.X_scalar.radix_product;
  }
  return {torch::cat(xs), torch::cat(scalars), vocab};
}

// ---- model -----------------------------------------------------------------------

OclModelImpl::OclModelImpl(OclConfig config, int64_t image_size, int64_t token_dim, int64_t vocab, uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  if (image_size % 4 != 0) throw std::invalid_argument("image size must be a multiple of 4");
  grid_ = image_size / 4;
  const int64_t h = config_.encoder_hidden;
  encoder_ = register_module(
      "encoder", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, h, 4).stride(2).padding(1)), nn::ReLU(),
                                nn::Conv2d(nn::Conv2dOptions(h, h, 4).stride(2).padding(1)), nn::ReLU(),
                                nn::Conv2d(nn::Conv2dOptions(h, h, 3).stride(1).padding(1)), nn::ReLU(),
                                nn::Conv2d(nn::Conv2dOptions(h, h, 3).stride(1).padding(1))));
  position_ = register_module("position", nn::Linear(4, h));
  feature_norm_ = register_module("feature_norm", nn::LayerNorm(nn::LayerNormOptions({h})));
  feature_mlp_ = register_module("feature_mlp", mlp(h, h, h));
  const auto lin = torch::linspace(0.0, 1.0, grid_);
  const auto yy = lin.view({grid_, 1}).expand({grid_, grid_});
  const auto xx = lin.view({1, grid_}).expand({grid_, grid_});
  grid_coords_ = register_buffer("grid_coords", torch::stack({xx, yy, 1 - xx, 1 - yy}, -1).reshape({grid_ * grid_, 4}));
  slot_attention_ = register_module(
      "slot_attention", SlotAttention(config_.num_slots, h, config_.slot_dim, config_.slot_iters));
  decoder_ = register_module("decoder", TokenDecoder(token_dim, vocab, grid_ * grid_, config_.slot_dim,
                                                     config_.decoder_width, config_.decoder_layers,
                                                     config_.decoder_heads));
  propagator_ = register_module("propagator", SlotPropagator(config_.slot_dim, config_.decoder_heads));

  auto gen = make_generator(derive_seed(seed, 21));
  reset_parameters(*this, gen);
  torch::NoGradGuard guard;
  slot_attention_->mu.normal_(0.0, 1.0 / std::sqrt(static_cast<double>(config_.slot_dim)), gen);
  slot_attention_->log_sigma.uniform_(-3.0, -1.0, gen);
  decoder_->init_embeddings(gen);
}

torch::Tensor OclModelImpl::features(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(3) != 3 || images.size(1) != 4 * grid_ || images.size(2) != 4 * grid_) {
    throw std::invalid_argument("ocl: expected (B, " + std::to_string(4 * grid_) + ", " + std::to_string(4 * grid_) +
                                ", 3) images");
  }
  const int64_t b = images.size(0);
  auto f = encoder_->forward(images.permute({0, 3, 1, 2})).permute({0, 2, 3, 1}).reshape({b, grid_ * grid_, -1});
  f = f + position_(grid_coords_);
  return feature_mlp_->forward(feature_norm_(f));
}

SlotState OclModelImpl::slots(const torch::Tensor& images, torch::Generator& gen,
                              const std::optional<torch::Tensor>& queries) {
  const auto f = features(images);
  const auto q = queries ? *queries : slot_attention_->sample_queries(images.size(0), gen);
  return slot_attention_(f, q);
}

OclModelImpl::Output OclModelImpl::forward(const torch::Tensor& images, const torch::Tensor& X,
                                           const torch::Tensor& scalar, torch::Generator& gen,
                                           const std::optional<torch::Tensor>& queries) {
  const int64_t b = images.size(0);
  if (scalar.max().item<int64_t>() >= decoder_->vocab()) {
    throw std::invalid_argument("ocl: target index outside the decoder vocabulary");
  }
  Output out;
  out.state = slots(images, gen, queries);
  out.logits = decoder_(X.reshape({b, grid_ * grid_, X.size(-1)}), out.state.slots);
  out.loss = torch::cross_entropy_loss(out.logits.reshape({-1, decoder_->vocab()}), scalar.reshape({-1}));
  return out;
}

std::vector<OclModelImpl::Output> OclModelImpl::forward_clip(const std::vector<torch::Tensor>& images,
                                                             const std::vector<torch::Tensor>& X,
                                                             const std::vector<torch::Tensor>& scalar,
                                                             torch::Generator& gen) {
  if (images.empty() || images.size() != X.size() || X.size() != scalar.size()) {
    throw std::invalid_argument("forward_clip: frame lists must be non-empty and equally long");
  }
  std::vector<Output> out;
  std::optional<torch::Tensor> queries;
  for (size_t t = 0; t < images.size(); ++t) {
    out.push_back(forward(images[t], X[t], scalar[t], gen, queries));
    queries = propagator_(out.back().state.slots);
  }
  return out;
}

torch::Tensor OclModelImpl::pixel_masks(const SlotState& state, int64_t image_size) const {
  const int64_t b = state.masks.size(0);
  const int64_t factor = image_size / grid_;
  return state.masks.view({b, grid_, grid_})
      .repeat_interleave(factor, 1)
      .repeat_interleave(factor, 2);
}

// ---- training ----------------------------------------------------------------------

std::vector<metrics::ObjectDiscoveryScores> score_images(OclModel& model, const ImageBank& data, uint64_t seed,
                                                         int64_t limit, int64_t batch_size) {
  torch::NoGradGuard guard;
  const bool was_training = model->is_training();
  model->eval();
  auto gen = make_generator(seed);
  const int64_t n = limit > 0 ? std::min(limit, data.size()) : data.size();
  const int64_t image_size = data.images.size(1);
  std::vector<metrics::ObjectDiscoveryScores> scores;
  for (const auto& idx : sequential_batches(n, batch_size)) {
    const auto state = model->slots(data.images_float(idx), gen);
    const auto pred = model->pixel_masks(state, image_size).to(torch::kInt32).contiguous();
    const auto truth = data.masks_at(idx).contiguous();
    const int64_t pixels = image_size * image_size;
    for (size_t i = 0; i < idx.size(); ++i) {
      const int32_t* p = pred.data_ptr<int32_t>() + static_cast<int64_t>(i) * pixels;
      const int32_t* t = truth.data_ptr<int32_t>() + static_cast<int64_t>(i) * pixels;
      scores.push_back(metrics::evaluate({{p, static_cast<size_t>(pixels)}, {t, static_cast<size_t>(pixels)}}));
    }
  }
  if (was_training) model->train();
  return scores;
}

metrics::ObjectDiscoveryScores evaluate_ocl(OclModel& model, const ImageBank& data, uint64_t seed, int64_t limit,
                                            int64_t batch_size) {
  metrics::ScoreAccumulator acc;
  for (const auto& s : score_images(model, data, seed, limit, batch_size)) acc.add(s);
  return acc.mean();
}

OclTrainResult train_ocl(OclModel& model, VaeModel& vae, const ImageBank& train, const ImageBank* val,
                         const OclTrainOptions& options, const std::function<void(const OclCurvePoint&)>& on_point) {
  if (train.size() < 1) throw std::invalid_argument("train_ocl: empty dataset");
  if (options.steps < 0) throw std::invalid_argument("train_ocl: steps must be >= 0");
  if (options.eval_every < 1) throw std::invalid_argument("train_ocl: eval_every must be >= 1");
  for (auto& p : vae->parameters()) p.set_requires_grad(false);
  const uint64_t vae_checksum = io::parameter_checksum(*vae);
  const TokenBank tokens = tokenize(vae, train);

  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(options.learning_rate));
  BatchSampler sampler(train.size(), options.batch_size, derive_seed(options.seed, 31));
  auto gen = make_generator(derive_seed(options.seed, 32));
  const uint64_t eval_seed = derive_seed(options.seed, 33);

  OclTrainResult result;
  auto record = [&](int64_t step, double loss) {
    OclCurvePoint pt;
    pt.step = step;
    pt.loss = loss;
    if (val) pt.val = evaluate_ocl(model, *val, eval_seed, options.eval_samples);
    result.curve.push_back(pt);
    if (on_point) on_point(pt);
  };

  model->train();
  record(0, std::numeric_limits<double>::quiet_NaN());
  double loss_sum = 0.0;
  int64_t window = 0;
  for (int64_t step = 0; step < options.steps; ++step) {
    if (options.warmup_steps > 0) {
      const double scale = std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(options.warmup_steps));
      for (auto& group : optimizer.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(options.learning_rate * scale);
    }
    const auto idx = sampler.next();
    const auto index = torch::tensor(idx, torch::kInt64);
    auto out = model->forward(train.images_float(idx), tokens.X.index_select(0, index),
                              tokens.scalar.index_select(0, index), gen);
    const double loss_value = out.loss.item<double>();
    if (!std::isfinite(loss_value)) {
      throw DivergenceError("train_ocl diverged at step " + std::to_string(step));
    }
    optimizer.zero_grad();
    out.loss.backward();
    if (options.grad_clip > 0) torch::nn::utils::clip_grad_norm_(model->parameters(), options.grad_clip);
    optimizer.step();
    loss_sum += loss_value;
    ++window;
    if ((step + 1) % options.eval_every == 0 || step + 1 == options.steps) {
      record(step + 1, loss_sum / static_cast<double>(window));
      loss_sum = 0.0;
      window = 0;
    }
  }
  model->eval();
  if (io::parameter_checksum(*vae) != vae_checksum) {
    throw std::logic_error("train_ocl: frozen VAE parameters changed during training");
  }
  std::vector<double> sums;
  for (const auto& p : result.curve) sums.push_back(p.val.ari + p.val.ari_fg);
  result.smoothed_ari_sum = metrics::gaussian_smooth(sums);
  return result;
}

TransferResult transfer_eval(OclModel& model, const ImageBank& id, const ImageBank& ood, uint64_t seed) {
  return {evaluate_ocl(model, id, seed), evaluate_ocl(model, ood, seed)};
}

}  // namespace gdr

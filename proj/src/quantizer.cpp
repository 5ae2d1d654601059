#include "gdr/quantizer.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "gdr/rng.hpp"

namespace gdr {

std::string to_string(QuantizerMode mode) { return mode == QuantizerMode::DVAE ? "dvae" : "vqvae"; }

QuantizerMode parse_quantizer_mode(const std::string& text) {
  if (text == "dvae") return QuantizerMode::DVAE;
  if (text == "vqvae") return QuantizerMode::VQVAE;
  throw std::invalid_argument("unknown quantizer mode '" + text + "' (expected dvae|vqvae)");
}

std::string to_string(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::None: return "none";
    case ProjectionKind::Invertible: return "invertible";
    case ProjectionKind::Independent: return "independent";
  }
  return "none";
}

ProjectionKind parse_projection_kind(const std::string& text) {
  if (text == "none") return ProjectionKind::None;
  if (text == "invertible") return ProjectionKind::Invertible;
  if (text == "independent") return ProjectionKind::Independent;
  throw std::invalid_argument("unknown projection '" + text + "' (expected none|invertible|independent)");
}

int64_t QuantizerConfig::grouped_width() const {
  return organize_channels() ? expansion_rate * base_channels : base_channels;
}

std::vector<int64_t> QuantizerConfig::group_dims() const {
  const auto g = static_cast<int64_t>(group_sizes.size());
  if (g == 0) throw std::invalid_argument("quantizer needs at least one group");
  const int64_t width = grouped_width();
  if (width % g != 0) {
    throw std::invalid_argument("grouped width " + std::to_string(width) + " not divisible by " +
                                std::to_string(g) + " groups");
  }
  return std::vector<int64_t>(static_cast<size_t>(g), width / g);
}

void QuantizerConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (expansion_rate != 1 && expansion_rate != 2 && expansion_rate != 4 && expansion_rate != 8) {
    throw std::invalid_argument("expansion_rate must be one of 1, 2, 4, 8");
  }
  if (utilization_weight < 0.0) throw std::invalid_argument("utilization_weight must be >= 0");
  (void)group_dims();
}

// ---------------------------------------------------------------------------

InvertibleProjectionImpl::InvertibleProjectionImpl(int64_t base_channels, int64_t expanded_channels,
                                                   bool independent_up, uint64_t seed,
                                                   double rank_threshold)
    : base_(base_channels),
      expanded_(expanded_channels),
      independent_(independent_up),
      rank_threshold_(rank_threshold) {
  if (expanded_ < base_) throw std::invalid_argument("projection must not reduce channels");
  auto gen = make_generator(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(expanded_));
  W = register_parameter("W", torch::randn({expanded_, base_}, gen, torch::kFloat32) * scale);
  if (independent_) {
    U = register_parameter("U", torch::randn({base_, expanded_}, gen, torch::kFloat32) * scale);
  }
}

torch::Tensor InvertibleProjectionImpl::pinv() {
  // Full column rank: pinv(W) = (W^T W)^-1 W^T, differentiable through solve.
  // The normal equations square W's condition number, so solve in double.
  auto compute = [this] {
    if (min_singular_value() <= rank_threshold_) {
      throw std::domain_error("projection W is rank deficient");
    }
    const auto w = W.to(torch::kFloat64);
    const auto wt = w.transpose(0, 1);
    return torch::linalg_solve(wt.matmul(w), wt).to(W.scalar_type());
  };
  if (torch::GradMode::is_enabled() && W.requires_grad()) return compute();
  if (!cached_pinv_.defined() || cached_version_ != static_cast<int64_t>(W._version()) ||
      cached_pinv_.scalar_type() != W.scalar_type()) {
    torch::NoGradGuard no_grad;
    cached_pinv_ = compute();
    cached_version_ = static_cast<int64_t>(W._version());
  }
  return cached_pinv_;
}

torch::Tensor InvertibleProjectionImpl::up_matrix() { return independent_ ? U : pinv(); }

torch::Tensor InvertibleProjectionImpl::project_up(const torch::Tensor& z) {
  if (z.size(-1) != base_) {
    throw std::invalid_argument("project_up: expected " + std::to_string(base_) + " channels, got " +
                                std::to_string(z.size(-1)));
  }
  return z.matmul(up_matrix());
}

torch::Tensor InvertibleProjectionImpl::project_down(const torch::Tensor& x_plus) {
  if (x_plus.size(-1) != expanded_) {
    throw std::invalid_argument("project_down: expected " + std::to_string(expanded_) +
                                " channels, got " + std::to_string(x_plus.size(-1)));
  }
  return x_plus.matmul(W);
}

double InvertibleProjectionImpl::min_singular_value() const {
  torch::NoGradGuard no_grad;
  return torch::linalg_svdvals(W.detach().to(torch::kFloat64)).min().item<double>();
}

bool InvertibleProjectionImpl::ensure_full_rank(uint64_t reseed) {
  if (min_singular_value() > rank_threshold_) return false;
  std::cerr << "warning: projection W is rank deficient, re-initializing\n";
  torch::NoGradGuard no_grad;
  auto gen = make_generator(reseed);
  W.copy_(torch::randn({expanded_, base_}, gen, torch::kFloat32) / std::sqrt(static_cast<double>(expanded_)));
  cached_version_ = -1;
  return true;
}

double InvertibleProjectionImpl::pinv_identity_error() {
  torch::NoGradGuard no_grad;
  auto eye = torch::eye(base_, W.options());
  return (pinv().matmul(W) - eye).abs().max().item<double>();
}

// ---------------------------------------------------------------------------

double ResidualSchedule::alpha(int64_t step) const {
  const double half = 0.5 * static_cast<double>(std::max<int64_t>(total_pretrain_steps, 1));
  const auto s = static_cast<double>(step);
  if (s < 0.0) return 0.5;
  if (s >= half) return 0.0;
  return 0.25 * (1.0 + std::cos(std::numbers::pi * s / half));
}

double TemperatureSchedule::tau(int64_t step) const {
  if (!decay) return start;
  const double t = std::clamp(static_cast<double>(step) / static_cast<double>(std::max<int64_t>(total_steps, 1)), 0.0, 1.0);
  return start * std::pow(end / start, t);
}

// ---------------------------------------------------------------------------

std::vector<torch::Tensor> grouped_distances(const std::vector<torch::Tensor>& z_groups,
                                             const GroupedCodebookImpl& cb) {
  if (static_cast<int64_t>(z_groups.size()) != cb.num_groups()) {
    throw std::invalid_argument("grouped_distances: group count mismatch");
  }
  std::vector<torch::Tensor> out;
  out.reserve(z_groups.size());
  for (int64_t k = 0; k < cb.num_groups(); ++k) {
    const auto& z = z_groups[static_cast<size_t>(k)];
    const auto& c = cb.codes(k);
    if (z.size(-1) != c.size(1)) {
      throw std::invalid_argument("grouped_distances: group " + std::to_string(k) + " has " +
                                  std::to_string(z.size(-1)) + " channels, codebook expects " +
                                  std::to_string(c.size(1)));
    }
    auto d = z.pow(2).sum(-1, true) - 2.0 * z.matmul(c.transpose(0, 1)) + c.pow(2).sum(-1);
    out.push_back(d.clamp_min(0.0));
  }
  return out;
}

std::vector<torch::Tensor> gumbel_soft_weights(const std::vector<torch::Tensor>& distances, double tau,
                                               torch::Generator* generator, bool noise_enabled,
                                               std::vector<torch::Tensor>* logits_out) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_soft_weights: tau must be positive");
  if (noise_enabled && generator == nullptr) {
    throw std::invalid_argument("gumbel_soft_weights: noise requires a generator");
  }
  std::vector<torch::Tensor> weights;
  weights.reserve(distances.size());
  if (logits_out) logits_out->clear();
  for (const auto& d : distances) {
    if (!torch::isfinite(d).all().item<bool>()) {
      throw std::domain_error("gumbel_soft_weights: non-finite distances");
    }
    auto logits = -d;
    if (noise_enabled) {
      auto u = torch::rand(d.sizes(), *generator, d.options().requires_grad(false));
      auto gumbel = -torch::log((-torch::log(u.clamp_min(1e-20))).clamp_min(1e-20));
      logits = logits + gumbel;
    }
    logits = logits / tau;
    weights.push_back(torch::softmax(logits, -1));
    if (logits_out) logits_out->push_back(logits);
  }
  return weights;
}

TupleIndexMap tuple_indexes(const std::vector<torch::Tensor>& soft_weights) {
  if (soft_weights.empty()) throw std::invalid_argument("tuple_indexes: no groups");
  std::vector<torch::Tensor> idx;
  std::vector<int64_t> radices;
  for (const auto& w : soft_weights) {
    idx.push_back(w.detach().argmax(-1));
    radices.push_back(w.size(-1));
  }
  return {torch::stack(idx, -1), radices};
}

torch::Tensor utilization_loss(const std::vector<torch::Tensor>& soft_weights) {
  if (soft_weights.empty()) throw std::invalid_argument("utilization_loss: no groups");
  torch::Tensor total;
  for (const auto& w : soft_weights) {
    auto mean = w.reshape({-1, w.size(-1)}).mean(0);
    auto entropy = -(mean * torch::log(mean.clamp_min(1e-12))).sum();
    total = total.defined() ? total - entropy : -entropy;
  }
  return total;
}

torch::Tensor fuse_residual(const torch::Tensor& z_plus, const torch::Tensor& x_plus, double alpha) {
  if (z_plus.sizes() != x_plus.sizes()) throw std::invalid_argument("fuse_residual: shape mismatch");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("fuse_residual: alpha outside [0, 1]");
  return z_plus * alpha + x_plus * (1.0 - alpha);
}

torch::Tensor final_normalize(const torch::Tensor& x, double epsilon, int64_t sample_dims) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("final_normalize: epsilon must be positive");
  if (x.dim() < sample_dims) throw std::invalid_argument("final_normalize: tensor rank too small");
  std::vector<int64_t> dims;
  for (int64_t i = x.dim() - sample_dims; i < x.dim(); ++i) dims.push_back(i);
  auto mean = x.mean(dims, true);
  auto var = (x - mean).pow(2).mean(dims, true);
  return (x - mean) / torch::sqrt(var + epsilon);
}

namespace {

struct StraightThroughFn : public torch::autograd::Function<StraightThroughFn> {
  static torch::Tensor forward(torch::autograd::AutogradContext*, const torch::Tensor& soft,
                               const torch::Tensor& hard) {
    (void)soft;
    return hard.clone();
  }
  static torch::autograd::variable_list backward(torch::autograd::AutogradContext*,
                                                 torch::autograd::variable_list grad) {
    return {grad[0], torch::Tensor()};
  }
};

}  // namespace

torch::Tensor straight_through(const torch::Tensor& soft, const torch::Tensor& hard) {
  if (soft.sizes() != hard.sizes()) throw std::invalid_argument("straight_through: shape mismatch");
  return StraightThroughFn::apply(soft, hard.detach());
}

// ---------------------------------------------------------------------------

QuantizerImpl::QuantizerImpl(QuantizerConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  codebook_ = register_module(
      "codebook", GroupedCodebook(config_.group_sizes, config_.group_dims(), config_.code_init_scale, seed));
  if (config_.organize_channels()) {
    projection_ = register_module(
        "projection", InvertibleProjection(config_.base_channels, config_.grouped_width(),
                                           config_.projection == ProjectionKind::Independent,
                                           derive_seed(seed, 101), config_.rank_threshold));
    projection_->ensure_full_rank(derive_seed(seed, 102));
  }
}

torch::Tensor QuantizerImpl::post_process(const torch::Tensor& x_plus, const torch::Tensor& z_plus,
                                          double alpha) {
  torch::Tensor x = x_plus;
  if (config_.residual_enabled && alpha > 0.0) x = fuse_residual(z_plus, x, alpha);
  if (has_projection()) x = projection_->project_down(x);
  if (config_.final_normalize) x = final_normalize(x, config_.epsilon);
  return x;
}

QuantizerOutput QuantizerImpl::forward(const torch::Tensor& z_in, const QuantizeContext& ctx) {
  if (z_in.dim() != 3 && z_in.dim() != 4) {
    throw std::invalid_argument("quantize: expected (H, W, c) or (B, H, W, c)");
  }
  if (z_in.size(-1) != config_.base_channels) {
    throw std::invalid_argument("quantize: expected " + std::to_string(config_.base_channels) +
                                " channels, got " + std::to_string(z_in.size(-1)));
  }
  const bool batched = z_in.dim() == 4;
  const auto z = batched ? z_in : z_in.unsqueeze(0);
  const auto& cb = *codebook_;

  QuantizerOutput out;
  out.Z_plus = has_projection() ? projection_->project_up(z) : z;
  const auto groups = cb.split_groups(out.Z_plus);
  const auto distances = grouped_distances(groups, cb);

  std::vector<torch::Tensor> logits;
  const double tau = ctx.temperature.value_or(config_.temperature);
  out.D_soft = gumbel_soft_weights(distances, tau, ctx.generator, ctx.noise_enabled, &logits);
  out.X_tuple = tuple_indexes(logits);
  out.X_scalar = tuple_to_scalar(out.X_tuple);
  out.utilization_loss = utilization_loss(out.D_soft);

  const auto hard_plus = select_codes(cb, out.X_tuple);
  if (config_.mode == QuantizerMode::VQVAE) {
    out.vq_loss = config_.codebook_weight * torch::mse_loss(hard_plus, out.Z_plus.detach()) +
                  config_.commitment_weight * torch::mse_loss(out.Z_plus, hard_plus.detach());
    out.X = post_process(straight_through(out.Z_plus, hard_plus), out.Z_plus, ctx.alpha);
    out.decoder_input = out.X;
  } else {
    std::vector<torch::Tensor> mixtures;
    for (int64_t k = 0; k < cb.num_groups(); ++k) {
      mixtures.push_back(out.D_soft[static_cast<size_t>(k)].matmul(cb.codes(k)));
    }
    out.Z_soft = torch::cat(mixtures, -1);
    out.vq_loss = torch::zeros({}, z.options());
    out.decoder_input = post_process(out.Z_soft, out.Z_plus, ctx.alpha);
    out.X = post_process(hard_plus, out.Z_plus, ctx.alpha);
  }

  if (!batched) {
    out.X = out.X.squeeze(0);
    out.decoder_input = out.decoder_input.squeeze(0);
    out.X_tuple.indexes = out.X_tuple.indexes.squeeze(0);
    out.X_scalar.indexes = out.X_scalar.indexes.squeeze(0);
    for (auto& d : out.D_soft) d = d.squeeze(0);
    if (out.Z_soft.defined()) out.Z_soft = out.Z_soft.squeeze(0);
    out.Z_plus = out.Z_plus.squeeze(0);
  }
  return out;
}

torch::Tensor QuantizerImpl::represent(const TupleIndexMap& tuple) {
  auto hard = select_codes(*codebook_, tuple);
  const bool batched = hard.dim() == 4;
  auto x = post_process(batched ? hard : hard.unsqueeze(0), torch::Tensor(), 0.0);
  return batched ? x : x.squeeze(0);
}

void QuantizerImpl::after_optimizer_step(uint64_t reseed) {
  if (has_projection()) projection_->ensure_full_rank(reseed);
}

}  // namespace gdr

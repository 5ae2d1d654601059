#include "gdr/vae.hpp"

#include <cmath>

#include "gdr/nn_init.hpp"
#include "gdr/rng.hpp"

namespace gdr {

namespace nn = torch::nn;

void VaeConfig::validate() const {
  quantizer.validate();
  if (hidden < 1) throw std::invalid_argument("vae hidden width must be >= 1");
}

VaeModelImpl::VaeModelImpl(VaeConfig config, uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const int64_t h = config_.hidden;
  const int64_t c = config_.quantizer.base_channels;
  encoder_ = register_module(
      "encoder", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(3, h, 4).stride(2).padding(1)), nn::ReLU(),
                                nn::Conv2d(nn::Conv2dOptions(h, h, 4).stride(2).padding(1)), nn::ReLU(),
                                nn::Conv2d(nn::Conv2dOptions(h, h, 3).stride(1).padding(1)), nn::ReLU(),
                                nn::Conv2d(nn::Conv2dOptions(h, c, 3).stride(1).padding(1))));
  decoder_ = register_module(
      "decoder",
      nn::Sequential(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(c, h, 3).stride(1).padding(1)), nn::ReLU(),
                     nn::ConvTranspose2d(nn::ConvTranspose2dOptions(h, h, 3).stride(1).padding(1)), nn::ReLU(),
                     nn::ConvTranspose2d(nn::ConvTranspose2dOptions(h, h, 4).stride(2).padding(1)), nn::ReLU(),
                     nn::ConvTranspose2d(nn::ConvTranspose2dOptions(h, 3, 4).stride(2).padding(1))));
  auto gen = make_generator(derive_seed(seed, 1));
  reset_parameters(*encoder_, gen);
  reset_parameters(*decoder_, gen);
  quantizer_ = register_module("quantizer", Quantizer(config_.quantizer, derive_seed(seed, 2)));
}

torch::Tensor VaeModelImpl::encode(const torch::Tensor& images) {
  if ((images.dim() != 3 && images.dim() != 4) || images.size(-1) != 3) {
    throw std::invalid_argument("encode: expected (B, H, W, 3) or (H, W, 3) images");
  }
  if (images.size(-2) % 4 != 0 || images.size(-3) % 4 != 0) {
    throw std::invalid_argument("encode: image height and width must be multiples of 4");
  }
  const bool batched = images.dim() == 4;
  auto x = (batched ? images : images.unsqueeze(0)).permute({0, 3, 1, 2});
  auto z = encoder_->forward(x).permute({0, 2, 3, 1}).contiguous();
  return batched ? z : z.squeeze(0);
}

torch::Tensor VaeModelImpl::decode(const torch::Tensor& rep) {
  if ((rep.dim() != 3 && rep.dim() != 4) || rep.size(-1) != config_.quantizer.base_channels) {
    throw std::invalid_argument("decode: expected channels-last input with " +
                                std::to_string(config_.quantizer.base_channels) + " channels");
  }
  const bool batched = rep.dim() == 4;
  auto x = (batched ? rep : rep.unsqueeze(0)).permute({0, 3, 1, 2});
  auto out = decoder_->forward(x).permute({0, 2, 3, 1}).contiguous();
  return batched ? out : out.squeeze(0);
}

VaeModelImpl::Output VaeModelImpl::forward(const torch::Tensor& images, const QuantizeContext& ctx) {
  Output out;
  out.Z = encode(images);
  out.q = quantizer_->forward(out.Z, ctx);
  out.reconstruction = decode(out.q.decoder_input);
  return out;
}

QuantizerOutput VaeModelImpl::represent(const torch::Tensor& images) {
  return quantizer_->forward(encode(images), QuantizeContext{});
}

PretrainReport pretrain(VaeModel& model, const ImageBank& data, const PretrainOptions& options,
                        const std::function<void(const PretrainRecord&)>& on_record) {
  if (data.size() < 1) throw std::invalid_argument("pretrain: empty dataset");
  if (options.steps < 1) throw std::invalid_argument("pretrain: steps must be >= 1");
  if (options.log_every < 1) throw std::invalid_argument("pretrain: log_every must be >= 1");
  model->train();
  const auto& qcfg = model->config().quantizer;
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(options.learning_rate));
  BatchSampler sampler(data.size(), options.batch_size, derive_seed(options.seed, 11));
  auto noise = make_generator(derive_seed(options.seed, 12));
  const ResidualSchedule residual{options.steps};
  const TemperatureSchedule temperature{qcfg.temperature, 0.1, options.steps, options.temperature_decay};

  std::vector<int64_t> radices = model->quantizer()->codebook()->group_sizes();
  metrics::UsageAccumulator usage(radices);
  PretrainReport report;
  double sum_rec = 0, sum_util = 0, sum_vq = 0;
  int64_t window = 0;

  for (int64_t step = 0; step < options.steps; ++step) {
    QuantizeContext ctx;
    ctx.alpha = qcfg.residual_enabled ? residual.alpha(step) : 0.0;
    ctx.temperature = temperature.tau(step);
    ctx.noise_enabled = options.gumbel_noise;
    ctx.generator = &noise;

    const auto images = data.images_float(sampler.next());
    VaeModelImpl::Output out;
    try {
      out = model->forward(images, ctx);
    } catch (const std::domain_error& e) {
      // Non-finite activations reach the quantizer before they reach the loss.
      throw DivergenceError("pretrain diverged at step " + std::to_string(step) + ": " + e.what());
    } catch (const c10::LinAlgError& e) {
      throw DivergenceError("pretrain diverged at step " + std::to_string(step) + ": " + e.what_without_backtrace());
    }
    const auto rec = torch::mse_loss(out.reconstruction, images);
    const auto loss = rec + qcfg.utilization_weight * out.q.utilization_loss + out.q.vq_loss;
    const double loss_value = loss.item<double>();
    if (!std::isfinite(loss_value)) {
      throw DivergenceError("pretrain diverged at step " + std::to_string(step) + " (loss " +
                            std::to_string(loss_value) + ")");
    }
    optimizer.zero_grad();
    loss.backward();
    optimizer.step();
    model->quantizer()->after_optimizer_step(derive_seed(options.seed, 1000 + static_cast<uint64_t>(step)));

    sum_rec += rec.item<double>();
    sum_util += out.q.utilization_loss.item<double>();
    sum_vq += out.q.vq_loss.item<double>();
    ++window;
    const auto tuples = out.q.X_tuple.indexes.contiguous();
    usage.add({tuples.data_ptr<int64_t>(), static_cast<size_t>(tuples.numel())});

    if ((step + 1) % options.log_every == 0 || step + 1 == options.steps) {
      PretrainRecord r;
      r.step = step + 1;
      r.reconstruction = sum_rec / window;
      r.utilization = sum_util / window;
      r.vq = sum_vq / window;
      r.alpha = ctx.alpha;
      r.tau = *ctx.temperature;
      r.perplexity = usage.result().perplexity;
      report.records.push_back(r);
      if (on_record) on_record(r);
      sum_rec = sum_util = sum_vq = 0;
      window = 0;
      usage = metrics::UsageAccumulator(radices);
    }
  }
  model->eval();
  return report;
}

VaeEvaluation evaluate_vae(VaeModel& model, const ImageBank& data, int64_t batch_size) {
  torch::NoGradGuard guard;
  model->eval();
  metrics::UsageAccumulator usage(model->quantizer()->codebook()->group_sizes());
  double total = 0.0;
  for (const auto& idx : sequential_batches(data.size(), batch_size)) {
    const auto images = data.images_float(idx);
    auto out = model->forward(images, QuantizeContext{});
    total += torch::mse_loss(out.reconstruction, images).item<double>() * static_cast<double>(idx.size());
    const auto tuples = out.q.X_tuple.indexes.contiguous();
    usage.add({tuples.data_ptr<int64_t>(), static_cast<size_t>(tuples.numel())});
  }
  return {total / static_cast<double>(data.size()), usage.result()};
}

}  // namespace gdr

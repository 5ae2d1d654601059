#include "gdr/module_io.hpp"

namespace gdr::io {

namespace {

DType dtype_of(torch::ScalarType s) {
  switch (s) {
    case torch::kFloat32: return DType::Float32;
    case torch::kFloat64: return DType::Float64;
    case torch::kUInt8: return DType::UInt8;
    case torch::kInt32: return DType::Int32;
    case torch::kInt64: return DType::Int64;
    default: throw std::invalid_argument("unsupported tensor dtype for serialization");
  }
}

torch::ScalarType scalar_of(DType d) {
  switch (d) {
    case DType::Float32: return torch::kFloat32;
    case DType::Float64: return torch::kFloat64;
    case DType::UInt8: return torch::kUInt8;
    case DType::Int32: return torch::kInt32;
    case DType::Int64: return torch::kInt64;
  }
  throw FormatError("unknown dtype code");
}

}  // namespace

RawTensor to_raw(const torch::Tensor& t) {
  const auto c = t.detach().to(torch::kCPU).contiguous();
  RawTensor r;
  r.dtype = dtype_of(c.scalar_type());
  r.shape.assign(c.sizes().begin(), c.sizes().end());
  r.bytes.resize(c.numel() * c.element_size());
  if (!r.bytes.empty()) std::memcpy(r.bytes.data(), c.data_ptr(), r.bytes.size());
  return r;
}

torch::Tensor from_raw(const RawTensor& r) {
  auto t = torch::empty(r.shape, torch::TensorOptions().dtype(scalar_of(r.dtype)));
  if (!r.bytes.empty()) std::memcpy(t.data_ptr(), r.bytes.data(), r.bytes.size());
  return t;
}

void append_module(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix) {
  for (const auto& p : module.named_parameters(true)) ckpt.entries.emplace_back(prefix + p.key(), to_raw(p.value()));
  for (const auto& b : module.named_buffers(true)) ckpt.entries.emplace_back(prefix + b.key(), to_raw(b.value()));
}

void load_module(const Checkpoint& ckpt, torch::nn::Module& module, const std::string& prefix) {
  torch::NoGradGuard guard;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    const auto src = from_raw(ckpt.at(prefix + name));
    if (src.sizes() != dst.sizes()) throw FormatError("shape mismatch for checkpoint entry '" + prefix + name + "'");
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters(true)) copy(p.key(), p.value());
  for (auto& b : module.named_buffers(true)) copy(b.key(), b.value());
}

}  // namespace gdr::io

namespace gdr::io {

uint64_t parameter_checksum(const torch::nn::Module& module) {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  auto add = [&](const std::string& name, const torch::Tensor& t) {
    mix(name.data(), name.size());
    const auto c = t.detach().contiguous();
    mix(c.data_ptr(), static_cast<size_t>(c.numel() * c.element_size()));
  };
  for (const auto& p : module.named_parameters(true)) add(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) add(b.key(), b.value());
  return h;
}

}  // namespace gdr::io

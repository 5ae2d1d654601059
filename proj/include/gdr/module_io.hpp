#pragma once

#include <string>

#include <torch/torch.h>

#include "gdr/tensor_io.hpp"

namespace gdr::io {

RawTensor to_raw(const torch::Tensor& t);
torch::Tensor from_raw(const RawTensor& t);

/// Appends every parameter and buffer of `module` as "<prefix><name>".
void append_module(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix);

/// Copies entries back into `module`. Missing entries or shape mismatches throw.
void load_module(const Checkpoint& ckpt, torch::nn::Module& module, const std::string& prefix);

}  // namespace gdr::io

namespace gdr::io {

/// FNV-1a over every parameter and buffer name and byte; detects any change.
uint64_t parameter_checksum(const torch::nn::Module& module);

}  // namespace gdr::io

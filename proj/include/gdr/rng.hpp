#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace gdr {

/// Explicit CPU random stream. Every stochastic operation takes one of these
/// rather than touching the global torch generator.
torch::Generator make_generator(uint64_t seed);

/// Derives an independent stream seed from (seed, stream index).
uint64_t derive_seed(uint64_t seed, uint64_t stream);

}  // namespace gdr

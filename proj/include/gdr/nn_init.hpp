#pragma once

#include <torch/torch.h>

namespace gdr {

/// Re-draws the parameters of every Linear, Conv2d, ConvTranspose2d and
/// GRUCell under `module` from `gen`, using the usual uniform
/// +-1/sqrt(fan_in) bounds, so construction does not depend on the global
/// torch generator. LayerNorm keeps its (1, 0) initialization.
void reset_parameters(torch::nn::Module& module, torch::Generator& gen);

}  // namespace gdr

#pragma once

#include <cstdint>
#include <filesystem>

#include "gdr/config.hpp"
#include "gdr/ocl.hpp"
#include "gdr/vae.hpp"

namespace gdr {

/// Model checkpoints as written by the command-line tool: a GDRC container
/// whose config string is {"kind": "vae"|"ocl", "config": <RunConfig>, ...}.
struct LoadedVae {
  VaeModel model{nullptr};
  RunConfig config;
  uint64_t step = 0;
};

struct LoadedOcl {
  OclModel model{nullptr};
  RunConfig config;
  uint64_t step = 0;
  int64_t image_size = 0;
};

void save_vae(const std::filesystem::path& path, VaeModel& vae, const RunConfig& cfg, uint64_t step);
LoadedVae load_vae(const std::filesystem::path& path);

void save_ocl(const std::filesystem::path& path, OclModel& model, const RunConfig& cfg, uint64_t step,
              int64_t image_size, int64_t token_dim, int64_t vocab);
LoadedOcl load_ocl(const std::filesystem::path& path);

}  // namespace gdr

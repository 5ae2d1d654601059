#include "gdr/run_checkpoint.hpp"

#include <nlohmann/json.hpp>

#include "gdr/module_io.hpp"
#include "gdr/tensor_io.hpp"

namespace gdr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::pair<io::Checkpoint, json> open(const fs::path& path, const std::string& kind) {
  if (!fs::exists(path)) throw std::runtime_error(kind + " checkpoint not found: " + path.string());
  auto ckpt = io::load_checkpoint(path);
  auto meta = json::parse(ckpt.config);
  if (meta.value("kind", "") != kind) throw std::runtime_error(path.string() + " is not a " + kind + " checkpoint");
  return {std::move(ckpt), std::move(meta)};
}

}  // namespace

void save_vae(const fs::path& path, VaeModel& vae, const RunConfig& cfg, uint64_t step) {
  io::Checkpoint ckpt;
  ckpt.step = step;
  ckpt.config = json{{"kind", "vae"}, {"config", cfg.values()}}.dump();
  io::append_module(ckpt, *vae, "vae.");
  io::save_checkpoint(path, ckpt);
}

LoadedVae load_vae(const fs::path& path) {
  const auto [ckpt, meta] = open(path, "vae");
  LoadedVae out;
  out.step = ckpt.step;
  out.config.merge(meta.at("config"));
  out.model = VaeModel(vae_config(out.config), static_cast<uint64_t>(out.config.integer("seed")));
  io::load_module(ckpt, *out.model, "vae.");
  out.model->eval();
  return out;
}

void save_ocl(const fs::path& path, OclModel& model, const RunConfig& cfg, uint64_t step, int64_t image_size,
              int64_t token_dim, int64_t vocab) {
  io::Checkpoint ckpt;
  ckpt.step = step;
  ckpt.config = json{{"kind", "ocl"},
                     {"config", cfg.values()},
                     {"image_size", image_size},
                     {"token_dim", token_dim},
                     {"vocab", vocab}}
                    .dump();
  io::append_module(ckpt, *model, "ocl.");
  io::save_checkpoint(path, ckpt);
}

LoadedOcl load_ocl(const fs::path& path) {
  const auto [ckpt, meta] = open(path, "ocl");
  LoadedOcl out;
  out.step = ckpt.step;
  out.config.merge(meta.at("config"));
  out.image_size = meta.at("image_size").get<int64_t>();
  out.model = OclModel(ocl_config(out.config), out.image_size, meta.at("token_dim").get<int64_t>(),
                       meta.at("vocab").get<int64_t>(), static_cast<uint64_t>(out.config.integer("seed")));
  io::load_module(ckpt, *out.model, "ocl.");
  out.model->eval();
  return out;
}

}  // namespace gdr

#include <torch/extension.h>

#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gdr/batch.hpp"
#include "gdr/codebook.hpp"
#include "gdr/config.hpp"
#include "gdr/datagen.hpp"
#include "gdr/metrics.hpp"
#include "gdr/module_io.hpp"
#include "gdr/quantizer.hpp"
#include "gdr/rng.hpp"
#include "gdr/run_checkpoint.hpp"
#include "gdr/tensor_io.hpp"

namespace py = pybind11;
using namespace gdr;

namespace {

metrics::SegmentationPair as_pair(const torch::Tensor& pred, const torch::Tensor& truth, torch::Tensor& p,
                                  torch::Tensor& t) {
  p = pred.to(torch::kInt32).contiguous().view({-1});
  t = truth.to(torch::kInt32).contiguous().view({-1});
  return {{p.data_ptr<int32_t>(), static_cast<size_t>(p.numel())},
          {t.data_ptr<int32_t>(), static_cast<size_t>(t.numel())}};
}

py::dict scores_dict(const metrics::ObjectDiscoveryScores& s) {
  py::dict d;
  d["ari"] = s.ari;
  d["ari_fg"] = s.ari_fg;
  d["mbo"] = s.mbo;
  d["miou"] = s.miou;
  d["degenerate"] = s.degenerate;
  return d;
}

torch::Tensor to_tensor(const io::RawTensor& raw) {
  static const std::map<io::DType, torch::ScalarType> types{{io::DType::Float32, torch::kFloat32},
                                                            {io::DType::Float64, torch::kFloat64},
                                                            {io::DType::UInt8, torch::kUInt8},
                                                            {io::DType::Int32, torch::kInt32},
                                                            {io::DType::Int64, torch::kInt64}};
  auto t = torch::empty(raw.shape, types.at(raw.dtype));
  if (!raw.bytes.empty()) std::memcpy(t.data_ptr(), raw.bytes.data(), raw.bytes.size());
  return t;
}

py::dict sample_dict(const data::SceneSample& s) {
  py::dict d;
  d["image"] = torch::from_blob(const_cast<uint8_t*>(s.image.data()), {s.height, s.width, 3}, torch::kUInt8).clone();
  d["mask"] = torch::from_blob(const_cast<int32_t*>(s.mask.data()), {s.height, s.width}, torch::kInt32).clone();
  py::list objects;
  for (const auto& o : s.objects) {
    py::dict od;
    od["color"] = o.attributes.color;
    od["shape"] = o.attributes.shape;
    od["size"] = o.attributes.size;
    od["x"] = o.x;
    od["y"] = o.y;
    objects.append(od);
  }
  d["objects"] = objects;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gdr, m) {
  m.doc() = "Grouped discrete representations for object-centric learning";

  py::register_exception<io::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<data::PlacementError>(m, "PlacementError", PyExc_RuntimeError);

  // ---- codebook ----
  m.def("radix_product", &radix_product, py::arg("radices"));
  m.def(
      "tuple_to_scalar",
      [](const torch::Tensor& tuples, const std::vector<int64_t>& radices) {
        return tuple_to_scalar({tuples.to(torch::kInt64), radices}).indexes;
      },
      py::arg("tuples"), py::arg("radices"), "Mixed-radix little-endian encoding of (..., g) tuple indexes.");
  m.def(
      "scalar_to_tuple",
      [](const torch::Tensor& scalars, const std::vector<int64_t>& radices) {
        return scalar_to_tuple({scalars.to(torch::kInt64), radix_product(radices)}, radices).indexes;
      },
      py::arg("scalars"), py::arg("radices"));
  m.def(
      "parameter_accounting",
      [](const std::vector<int64_t>& sizes, const std::vector<int64_t>& dims, int64_t proj_width, int64_t base_c) {
        auto cb = new_grouped_codebook(sizes, dims);
        const auto a = parameter_accounting(*cb, proj_width, base_c);
        py::dict d;
        d["codebook"] = a.codebook_params;
        d["projection"] = a.projection_params;
        d["grouped"] = a.grouped_params;
        d["nongrouped"] = a.nongrouped_params;
        d["ratio"] = a.ratio;
        return d;
      },
      py::arg("group_sizes"), py::arg("group_dims"), py::arg("proj_width"), py::arg("base_channels"));

  // ---- quantizer ----
  py::enum_<QuantizerMode>(m, "QuantizerMode").value("DVAE", QuantizerMode::DVAE).value("VQVAE", QuantizerMode::VQVAE);
  py::enum_<ProjectionKind>(m, "ProjectionKind")
      .value("NONE", ProjectionKind::None)
      .value("INVERTIBLE", ProjectionKind::Invertible)
      .value("INDEPENDENT", ProjectionKind::Independent);

  py::class_<QuantizerConfig>(m, "QuantizerConfig")
      .def(py::init<>())
      .def_readwrite("mode", &QuantizerConfig::mode)
      .def_readwrite("temperature", &QuantizerConfig::temperature)
      .def_readwrite("epsilon", &QuantizerConfig::epsilon)
      .def_readwrite("base_channels", &QuantizerConfig::base_channels)
      .def_readwrite("expansion_rate", &QuantizerConfig::expansion_rate)
      .def_readwrite("group_sizes", &QuantizerConfig::group_sizes)
      .def_readwrite("projection", &QuantizerConfig::projection)
      .def_readwrite("residual_enabled", &QuantizerConfig::residual_enabled)
      .def_readwrite("final_normalize", &QuantizerConfig::final_normalize)
      .def_readwrite("utilization_weight", &QuantizerConfig::utilization_weight)
      .def_readwrite("codebook_weight", &QuantizerConfig::codebook_weight)
      .def_readwrite("commitment_weight", &QuantizerConfig::commitment_weight)
      .def("grouped_width", &QuantizerConfig::grouped_width)
      .def("validate", &QuantizerConfig::validate);

  py::class_<QuantizerImpl, std::shared_ptr<QuantizerImpl>>(m, "Quantizer")
      .def(py::init([](const QuantizerConfig& cfg, uint64_t seed) { return std::make_shared<QuantizerImpl>(cfg, seed); }),
           py::arg("config"), py::arg("seed") = 0)
      .def(
          "__call__",
          [](QuantizerImpl& q, const torch::Tensor& z, double alpha, std::optional<double> temperature, bool noise,
             uint64_t seed) {
            auto gen = make_generator(seed);
            const auto out = q.forward(z, {alpha, temperature, noise, &gen});
            py::dict d;
            d["X"] = out.X;
            d["decoder_input"] = out.decoder_input;
            d["tuple"] = out.X_tuple.indexes;
            d["scalar"] = out.X_scalar.indexes;
            d["Z_plus"] = out.Z_plus;
            d["utilization_loss"] = out.utilization_loss;
            d["vq_loss"] = out.vq_loss;
            return d;
          },
          py::arg("z"), py::arg("alpha") = 0.0, py::arg("temperature") = py::none(), py::arg("noise") = false,
          py::arg("seed") = 0, "Quantizes a channels-last (H, W, c) or (B, H, W, c) tensor.")
      .def("parameters", [](QuantizerImpl& q) { return q.parameters(); })
      .def("codes", [](QuantizerImpl& q, int64_t k) { return q.codebook()->codes(k); }, py::arg("group"))
      .def("pinv_identity_error", [](QuantizerImpl& q) {
        if (!q.has_projection()) throw std::logic_error("quantizer has no projection");
        return q.projection()->pinv_identity_error();
      });

  // ---- metrics ----
  m.def(
      "ari",
      [](const torch::Tensor& pred, const torch::Tensor& truth, bool foreground_only) {
        torch::Tensor p, t;
        return metrics::ari(as_pair(pred, truth, p, t), foreground_only).value;
      },
      py::arg("pred"), py::arg("truth"), py::arg("foreground_only") = false);
  m.def(
      "mbo",
      [](const torch::Tensor& pred, const torch::Tensor& truth) {
        torch::Tensor p, t;
        return metrics::mbo(as_pair(pred, truth, p, t)).value;
      },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "miou",
      [](const torch::Tensor& pred, const torch::Tensor& truth) {
        torch::Tensor p, t;
        return metrics::miou(as_pair(pred, truth, p, t)).value;
      },
      py::arg("pred"), py::arg("truth"));
  m.def(
      "evaluate",
      [](const torch::Tensor& pred, const torch::Tensor& truth) {
        torch::Tensor p, t;
        return scores_dict(metrics::evaluate(as_pair(pred, truth, p, t)));
      },
      py::arg("pred"), py::arg("truth"), "ARI, ARI_fg, mBO and mIoU of one label map pair.");

  // ---- data ----
  m.def(
      "generate_scene",
      [](const std::string& preset, uint64_t seed) {
        std::mt19937_64 rng(seed);
        return sample_dict(data::generate_scene(data::SceneSpec::preset(preset), rng));
      },
      py::arg("preset") = "default", py::arg("seed") = 0);
  m.def(
      "generate_split",
      [](const std::filesystem::path& root, const std::string& preset, int train, int val, int ood,
         const std::string& held_out, uint64_t seed) {
        data::generate_split(data::SceneSpec::preset(preset), {train, val, ood}, parse_held_out(held_out), seed,
                             root);
      },
      py::arg("root"), py::arg("preset") = "default", py::arg("train") = 2000, py::arg("val") = 256,
      py::arg("ood") = 256, py::arg("held_out") = "none", py::arg("seed") = 0);
  m.def(
      "load_split",
      [](const std::filesystem::path& dir) {
        const auto ds = data::load_dataset(dir);
        const auto bank = ImageBank::from_dataset(ds);
        py::dict d;
        d["images"] = bank.images;
        d["masks"] = bank.masks;
        d["split"] = ds.split;
        d["seed"] = ds.seed;
        return d;
      },
      py::arg("dir"), "Loads one split directory as uint8 images (N, H, W, 3) and int32 masks (N, H, W).");

  // ---- files ----
  m.def(
      "read_tensor_file",
      [](const std::filesystem::path& path) {
        std::vector<torch::Tensor> out;
        for (const auto& r : io::read_tensor_file(path)) out.push_back(to_tensor(r));
        return out;
      },
      py::arg("path"));
  m.def(
      "write_tensor_file",
      [](const std::filesystem::path& path, const std::vector<torch::Tensor>& tensors) {
        std::vector<io::RawTensor> records;
        for (const auto& t : tensors) records.push_back(io::to_raw(t));
        io::write_tensor_file(path, records);
      },
      py::arg("path"), py::arg("tensors"));
  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        const auto ckpt = io::load_checkpoint(path);
        py::dict tensors;
        for (const auto& [name, raw] : ckpt.entries) tensors[py::str(name)] = to_tensor(raw);
        py::dict d;
        d["step"] = ckpt.step;
        d["config"] = ckpt.config;
        d["tensors"] = tensors;
        return d;
      },
      py::arg("path"), "Reads a GDRC checkpoint: step, JSON config string and named tensors.");
  m.def(
      "vae_represent",
      [](const std::filesystem::path& checkpoint, const torch::Tensor& images) {
        auto loaded = load_vae(checkpoint);
        torch::NoGradGuard guard;
        const auto out = loaded.model->represent(images.to(torch::kFloat32));
        py::dict d;
        d["X"] = out.X;
        d["tuple"] = out.X_tuple.indexes;
        d["scalar"] = out.X_scalar.indexes;
        return d;
      },
      py::arg("checkpoint"), py::arg("images"),
      "Discrete representation of (B, H, W, 3) float images in [0, 1] under a pretrained VAE checkpoint.");
}

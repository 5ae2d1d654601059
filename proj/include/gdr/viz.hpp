#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include <torch/torch.h>

#include "gdr/vae.hpp"

namespace gdr::viz {

/// 8-bit RGB raster, row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> rgb;

  Image() = default;
  Image(int h, int w) : height(h), width(w), rgb(static_cast<size_t>(h) * w * 3, 0) {}
  uint8_t* at(int y, int x) { return &rgb[(static_cast<size_t>(y) * width + x) * 3]; }
  const uint8_t* at(int y, int x) const { return &rgb[(static_cast<size_t>(y) * width + x) * 3]; }
};

void write_png(const std::filesystem::path& path, const Image& image);

/// Deterministic well-spread color for a code index.
std::array<uint8_t, 3> palette_color(int64_t index);

/// Nearest-neighbour upscale by an integer factor.
Image upscale(const Image& image, int factor);
/// Images side by side with a 2 px white gutter.
Image hstack(const std::vector<Image>& images);
/// (H, W, 3) float tensor in [0, 1] (clamped) to an image.
Image from_tensor(const torch::Tensor& hwc);

/// One image per group, each super-pixel painted with palette_color(index).
std::vector<Image> index_maps(const torch::Tensor& tuple_indexes);  // (h, w, g)

/// L2 distance of every super-pixel of X (h, w, c) to the central one, (h, w).
torch::Tensor separability_distances(const torch::Tensor& X);
/// Distances normalized by their max (zero map stays zero) through a
/// blue-to-yellow ramp.
Image heat_map(const torch::Tensor& values);

struct SwapResult {
  Image triptych;  // input | reconstruction | swapped reconstruction
  int64_t group = 0;
  int64_t original_code = 0;
  int64_t new_code = 0;
  double color_shift = 0.0;  // RGB distance of the object's mean decoded color
  double shape_iou = 0.0;    // decoded foreground inside the object's window
  int64_t swapped_cells = 0;
};

/// Dominant code of every group on each labelled object's super-pixels
/// (majority label per super-pixel). Background is omitted.
std::map<int32_t, std::vector<int64_t>> object_codes(VaeModel& vae, const torch::Tensor& image,
                                                     const torch::Tensor& labels);

/// Replaces group `group`'s index on the super-pixels of object `object`
/// (label in `labels`, (H, W) int32) with `new_code`, then decodes both maps.
/// With new_code < 0 the code is drawn from those other objects use in that
/// group (any other code if there are none).
SwapResult attribute_swap(VaeModel& vae, const torch::Tensor& image, const torch::Tensor& labels, int32_t object,
                          int64_t group, int64_t new_code, uint64_t seed);

struct RibbonEdge {
  std::string stage;  // "up" (pinv(W) or U) or "down" (W)
  int64_t source = 0;
  int64_t target = 0;
  double weight = 0.0;
};
std::vector<RibbonEdge> ribbon_edges(InvertibleProjectionImpl& projection);
void write_ribbon_csv(const std::filesystem::path& path, const std::vector<RibbonEdge>& edges);

struct ArtifactOptions {
  int64_t group = 0;
  int32_t object = 1;
  int scale = 4;
  uint64_t seed = 0;
};

/// Writes index_map_g<k>.png, separability.png, swap.png and, when the model
/// organizes channels, ribbon.csv into `dir`. Returns the swap it rendered.
SwapResult write_artifacts(VaeModel& vae, const torch::Tensor& image, const torch::Tensor& labels,
                           const ArtifactOptions& options, const std::filesystem::path& dir);

}  // namespace gdr::viz

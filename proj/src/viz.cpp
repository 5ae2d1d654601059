#include "gdr/viz.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>

namespace gdr::viz {

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.height < 1 || image.width < 1) throw std::invalid_argument("write_png: empty image");
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) png_write_row(png, const_cast<png_bytep>(image.at(y, 0)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::array<uint8_t, 3> palette_color(int64_t index) {
  // Golden-ratio hue walk with alternating value bands.
  const double hue = std::fmod(static_cast<double>(index) * 0.618033988749895, 1.0) * 6.0;
  const double sat = 0.65 + 0.35 * ((index / 3) % 2);
  const double val = 0.95 - 0.3 * (index % 3) / 2.0;
  const int sector = static_cast<int>(hue);
  const double f = hue - sector;
  const double p = val * (1 - sat), q = val * (1 - sat * f), t = val * (1 - sat * (1 - f));
  double r = 0, g = 0, b = 0;
  switch (sector % 6) {
    case 0: r = val, g = t, b = p; break;
    case 1: r = q, g = val, b = p; break;
    case 2: r = p, g = val, b = t; break;
    case 3: r = p, g = q, b = val; break;
    case 4: r = t, g = p, b = val; break;
    default: r = val, g = p, b = q; break;
  }
  auto to8 = [](double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  return {to8(r), to8(g), to8(b)};
}

Image upscale(const Image& image, int factor) {
  if (factor < 1) throw std::invalid_argument("upscale factor must be >= 1");
  Image out(image.height * factor, image.width * factor);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) std::copy_n(image.at(y / factor, x / factor), 3, out.at(y, x));
  return out;
}

Image hstack(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("hstack: no images");
  constexpr int gutter = 2;
  int h = 0, w = 0;
  for (const auto& im : images) h = std::max(h, im.height), w += im.width;
  Image out(h, w + gutter * static_cast<int>(images.size() - 1));
  std::fill(out.rgb.begin(), out.rgb.end(), 255);
  int x0 = 0;
  for (const auto& im : images) {
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x) std::copy_n(im.at(y, x), 3, out.at(y, x0 + x));
    x0 += im.width + gutter;
  }
  return out;
}

Image from_tensor(const torch::Tensor& hwc) {
  if (hwc.dim() != 3 || hwc.size(2) != 3) throw std::invalid_argument("from_tensor: expected (H, W, 3)");
  const auto bytes = (hwc.detach().clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
  Image out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)));
  std::memcpy(out.rgb.data(), bytes.data_ptr<uint8_t>(), out.rgb.size());
  return out;
}

std::vector<Image> index_maps(const torch::Tensor& tuple_indexes) {
  if (tuple_indexes.dim() != 3) throw std::invalid_argument("index_maps: expected (h, w, g)");
  const auto idx_t = tuple_indexes.to(torch::kInt64).contiguous();
  const auto idx = idx_t.accessor<int64_t, 3>();
  const int h = static_cast<int>(idx.size(0)), w = static_cast<int>(idx.size(1));
  std::vector<Image> out;
  for (int64_t k = 0; k < idx.size(2); ++k) {
    Image im(h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const auto c = palette_color(idx[y][x][k]);
        std::copy(c.begin(), c.end(), im.at(y, x));
      }
    out.push_back(std::move(im));
  }
  return out;
}

torch::Tensor separability_distances(const torch::Tensor& X) {
  if (X.dim() != 3) throw std::invalid_argument("separability: expected (h, w, c)");
  const auto center = X[X.size(0) / 2][X.size(1) / 2];
  return (X - center).pow(2).sum(-1).sqrt();
}

Image heat_map(const torch::Tensor& values) {
  if (values.dim() != 2) throw std::invalid_argument("heat_map: expected (h, w)");
  const auto v = values.detach().to(torch::kFloat64).contiguous();
  const double mx = v.max().item<double>();
  const auto norm = mx > 0 ? v / mx : v;
  Image out(static_cast<int>(v.size(0)), static_cast<int>(v.size(1)));
  const auto* p = norm.data_ptr<double>();
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double t = std::clamp(p[y * out.width + x], 0.0, 1.0);
      auto* px = out.at(y, x);
      px[0] = static_cast<uint8_t>(std::lround(30 + 225 * t));
      px[1] = static_cast<uint8_t>(std::lround(20 + 210 * t));
      px[2] = static_cast<uint8_t>(std::lround(120 * (1 - t) + 40));
    }
  return out;
}

namespace {

// Majority label of each super-pixel of an (h, w) grid over an (H, W) label map.
std::vector<int32_t> super_pixel_labels(const torch::Tensor& lab, int64_t h, int64_t w) {
  const int64_t f = lab.size(0) / h;
  const auto cells = lab.view({h, f, w, f}).permute({0, 2, 1, 3}).reshape({h * w, f * f}).contiguous();
  std::vector<int32_t> out(static_cast<size_t>(h * w));
  const auto* p = cells.data_ptr<int32_t>();
  for (int64_t i = 0; i < h * w; ++i) {
    std::map<int32_t, int> count;
    for (int64_t j = 0; j < f * f; ++j) ++count[p[i * f * f + j]];
    out[static_cast<size_t>(i)] =
        std::max_element(count.begin(), count.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  }
  return out;
}

}  // namespace

std::map<int32_t, std::vector<int64_t>> object_codes(VaeModel& vae, const torch::Tensor& image,
                                                     const torch::Tensor& labels) {
  torch::NoGradGuard guard;
  vae->eval();
  const auto lab = labels.to(torch::kInt32).contiguous();
  const auto tuple = vae->represent(image).X_tuple.indexes.contiguous();
  const int64_t h = tuple.size(0), w = tuple.size(1), g = tuple.size(2);
  const auto cell_label = super_pixel_labels(lab, h, w);
  std::map<int32_t, std::vector<std::map<int64_t, int>>> counts;
  const int64_t* t = tuple.data_ptr<int64_t>();
  for (int64_t i = 0; i < h * w; ++i) {
    const int32_t l = cell_label[static_cast<size_t>(i)];
    if (l == 0) continue;
    auto& c = counts[l];
    c.resize(static_cast<size_t>(g));
    for (int64_t k = 0; k < g; ++k) ++c[static_cast<size_t>(k)][t[i * g + k]];
  }
  std::map<int32_t, std::vector<int64_t>> out;
  for (const auto& [label, groups] : counts)
    for (const auto& c : groups)
      out[label].push_back(
          std::max_element(c.begin(), c.end(), [](auto& a, auto& b) { return a.second < b.second; })->first);
  return out;
}

SwapResult attribute_swap(VaeModel& vae, const torch::Tensor& image, const torch::Tensor& labels, int32_t object,
                          int64_t group, int64_t new_code, uint64_t seed) {
  torch::NoGradGuard guard;
  vae->eval();
  auto& quantizer = *vae->quantizer();
  const auto& sizes = quantizer.codebook()->group_sizes();
  if (group < 0 || group >= static_cast<int64_t>(sizes.size())) {
    throw std::out_of_range("viz: group " + std::to_string(group) + " out of range (have " +
                            std::to_string(sizes.size()) + ")");
  }
  if (new_code >= sizes[static_cast<size_t>(group)]) throw std::out_of_range("viz: code index out of range");
  const int64_t H = image.size(0), W = image.size(1);
  const auto lab = labels.to(torch::kInt32).contiguous();
  if (lab.size(0) != H || lab.size(1) != W) throw std::invalid_argument("viz: labels and image differ in size");

  const auto rep = vae->represent(image);
  auto tuple = rep.X_tuple;
  const int64_t h = tuple.indexes.size(0), w = tuple.indexes.size(1);
  const int64_t f = H / h;

  const auto cell_label = super_pixel_labels(lab, h, w);

  const auto codes = tuple.indexes.select(-1, group).contiguous();
  const int64_t* code = codes.data_ptr<int64_t>();
  std::map<int64_t, int> own;
  std::set<int64_t> others;
  for (int64_t i = 0; i < h * w; ++i) {
    const int32_t l = cell_label[static_cast<size_t>(i)];
    if (l == object) ++own[code[i]];
    else if (l != 0) others.insert(code[i]);
  }
  if (own.empty()) throw std::invalid_argument("viz: object covers no super-pixel");

  SwapResult res;
  res.group = group;
  res.original_code =
      std::max_element(own.begin(), own.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  if (new_code < 0) {
    others.erase(res.original_code);
    std::vector<int64_t> pool(others.begin(), others.end());
    if (pool.empty())
      for (int64_t c = 0; c < sizes[static_cast<size_t>(group)]; ++c)
        if (c != res.original_code) pool.push_back(c);
    std::mt19937_64 rng(seed);
    new_code = pool[std::uniform_int_distribution<size_t>(0, pool.size() - 1)(rng)];
  }
  res.new_code = new_code;

  auto swapped = tuple;
  swapped.indexes = tuple.indexes.clone();
  auto sw = swapped.indexes.view({h * w, -1});
  for (int64_t i = 0; i < h * w; ++i)
    if (cell_label[static_cast<size_t>(i)] == object) {
      sw[i][group] = new_code;
      ++res.swapped_cells;
    }

  const auto before = vae->decode(quantizer.represent(tuple)).clamp(0, 1);
  const auto after = vae->decode(quantizer.represent(swapped)).clamp(0, 1);

  const auto obj = (lab == object);
  const auto bg = (lab == 0);
  auto mean_color = [](const torch::Tensor& img, const torch::Tensor& m) {
    return img.index({m}).mean(0).to(torch::kFloat64);
  };
  const auto bg_color = mean_color(before, bg);
  const auto obj_before = mean_color(before, obj), obj_after = mean_color(after, obj);
  res.color_shift = (obj_before - obj_after).norm().item<double>();

  // Foreground = closer to the object's mean color than to the background's,
  // inside the object's bounding window, ignoring other objects.
  const auto ys = obj.any(1).nonzero().view({-1}), xs = obj.any(0).nonzero().view({-1});
  const int64_t pad = 2 * f;
  const int64_t y0 = std::max<int64_t>(0, ys.min().item<int64_t>() - pad);
  const int64_t y1 = std::min<int64_t>(H, ys.max().item<int64_t>() + pad + 1);
  const int64_t x0 = std::max<int64_t>(0, xs.min().item<int64_t>() - pad);
  const int64_t x1 = std::min<int64_t>(W, xs.max().item<int64_t>() + pad + 1);
  auto window = torch::zeros({H, W}, torch::kBool);
  window.slice(0, y0, y1).slice(1, x0, x1).fill_(true);
  window = window & ((lab == 0) | obj);
  auto foreground = [&](const torch::Tensor& img, const torch::Tensor& obj_color) {
    const auto d_obj = (img.to(torch::kFloat64) - obj_color).norm(2, -1);
    const auto d_bg = (img.to(torch::kFloat64) - bg_color).norm(2, -1);
    return (d_obj < d_bg) & window;
  };
  const auto fa = foreground(before, obj_before), fb = foreground(after, obj_after);
  const double inter = (fa & fb).sum().item<double>(), uni = (fa | fb).sum().item<double>();
  res.shape_iou = uni > 0 ? inter / uni : 0.0;

  res.triptych = hstack({from_tensor(image), from_tensor(before), from_tensor(after)});
  return res;
}

std::vector<RibbonEdge> ribbon_edges(InvertibleProjectionImpl& projection) {
  torch::NoGradGuard guard;
  std::vector<RibbonEdge> edges;
  const auto up_t = projection.up_matrix().to(torch::kFloat64).contiguous();  // (base, expanded)
  const auto down_t = projection.W.detach().to(torch::kFloat64).contiguous();  // (expanded, base)
  const auto up = up_t.accessor<double, 2>();
  const auto down = down_t.accessor<double, 2>();
  for (int64_t i = 0; i < up.size(0); ++i)
    for (int64_t j = 0; j < up.size(1); ++j) edges.push_back({"up", i, j, up[i][j]});
  for (int64_t j = 0; j < down.size(0); ++j)
    for (int64_t i = 0; i < down.size(1); ++i) edges.push_back({"down", j, i, down[j][i]});
  return edges;
}

void write_ribbon_csv(const std::filesystem::path& path, const std::vector<RibbonEdge>& edges) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "stage,source,target,weight\n";
  char buf[64];
  for (const auto& e : edges) {
    std::snprintf(buf, sizeof(buf), "%.9g", e.weight);
    out << e.stage << ',' << e.source << ',' << e.target << ',' << buf << '\n';
  }
}

SwapResult write_artifacts(VaeModel& vae, const torch::Tensor& image, const torch::Tensor& labels,
                           const ArtifactOptions& options, const std::filesystem::path& dir) {
  torch::NoGradGuard guard;
  vae->eval();
  std::filesystem::create_directories(dir);
  const int f = 4 * options.scale;
  const auto rep = vae->represent(image);
  const auto maps = index_maps(rep.X_tuple.indexes);
  for (size_t k = 0; k < maps.size(); ++k)
    write_png(dir / ("index_map_g" + std::to_string(k) + ".png"), upscale(maps[k], f));
  write_png(dir / "separability.png", upscale(heat_map(separability_distances(rep.X)), f));
  const auto swap = attribute_swap(vae, image, labels, options.object, options.group, -1, options.seed);
  write_png(dir / "swap.png", upscale(swap.triptych, options.scale));
  if (vae->quantizer()->has_projection())
    write_ribbon_csv(dir / "ribbon.csv", ribbon_edges(*vae->quantizer()->projection()));
  return swap;
}

}  // namespace gdr::viz

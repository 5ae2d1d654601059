#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "gdr/viz.hpp"

namespace fs = std::filesystem;
using namespace gdr;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

uint32_t be32(const std::string& s, size_t at) {
  uint32_t v = 0;
  for (size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<uint8_t>(s[at + i]);
  return v;
}

}  // namespace

TEST(Viz, PaletteDeterministicAndDistinct) {
  std::set<std::array<uint8_t, 3>> colors;
  for (int64_t i = 0; i < 64; ++i) {
    EXPECT_EQ(viz::palette_color(i), viz::palette_color(i));
    colors.insert(viz::palette_color(i));
  }
  EXPECT_EQ(colors.size(), 64u);
}

TEST(Viz, SeparabilityOfConstantIsZero) {
  const auto X = torch::full({5, 7, 3}, 0.3);
  const auto d = viz::separability_distances(X);
  EXPECT_EQ(d.sizes(), (std::vector<int64_t>{5, 7}));
  EXPECT_EQ(d.abs().max().item<float>(), 0.0f);
  const auto img = viz::heat_map(d);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) EXPECT_EQ(img.at(y, x)[0], img.at(0, 0)[0]);
}

TEST(Viz, SeparabilityDistances) {
  auto X = torch::zeros({3, 3, 2});
  X[0][0][0] = 3.0;
  X[0][0][1] = 4.0;
  X[1][1][0] = 0.0;
  const auto d = viz::separability_distances(X);
  EXPECT_FLOAT_EQ(d[0][0].item<float>(), 5.0f);
  EXPECT_FLOAT_EQ(d[1][1].item<float>(), 0.0f);
  EXPECT_FLOAT_EQ(d[2][2].item<float>(), 0.0f);
}

TEST(Viz, IndexMapsPaintCodes) {
  auto idx = torch::zeros({2, 3, 2}, torch::kInt64);
  idx[1][2][0] = 5;
  idx[0][1][1] = 3;
  const auto maps = viz::index_maps(idx);
  ASSERT_EQ(maps.size(), 2u);
  const auto c5 = viz::palette_color(5), c0 = viz::palette_color(0), c3 = viz::palette_color(3);
  EXPECT_TRUE(std::equal(c5.begin(), c5.end(), maps[0].at(1, 2)));
  EXPECT_TRUE(std::equal(c0.begin(), c0.end(), maps[0].at(0, 0)));
  EXPECT_TRUE(std::equal(c3.begin(), c3.end(), maps[1].at(0, 1)));
  const auto up = viz::upscale(maps[0], 4);
  EXPECT_EQ(up.height, 8);
  EXPECT_TRUE(std::equal(c5.begin(), c5.end(), up.at(7, 11)));
}

TEST(Viz, PngIsWellFormedAndDeterministic) {
  const auto dir = fs::temp_directory_path() / ("gdr_viz_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  viz::Image img(5, 9);
  for (size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = static_cast<uint8_t>(i * 7);
  viz::write_png(dir / "a.png", img);
  viz::write_png(dir / "b.png", img);
  const auto a = slurp(dir / "a.png");
  EXPECT_EQ(a.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  EXPECT_EQ(a.substr(12, 4), "IHDR");
  EXPECT_EQ(be32(a, 16), 9u);
  EXPECT_EQ(be32(a, 20), 5u);
  EXPECT_EQ(a, slurp(dir / "b.png"));
  EXPECT_THROW(viz::write_png(dir / "e.png", viz::Image{}), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Viz, AttributeSwapChangesOnlyTheObjectCells) {
  VaeConfig cfg;
  cfg.hidden = 8;
  cfg.quantizer.base_channels = 8;
  cfg.quantizer.expansion_rate = 2;
  cfg.quantizer.group_sizes = {4, 4};
  VaeModel vae(cfg, 0);
  auto spec = data::SceneSpec::fig1();
  spec.canvas = 32;
  spec.sizes = {5};
  std::mt19937_64 rng(1);
  const auto s = data::generate_scene(spec, rng);
  const auto bank = ImageBank::from_samples({s});
  const auto image = bank.images_float({0})[0];
  const auto r = viz::attribute_swap(vae, image, bank.masks[0], 1, 0, 2, 0);
  EXPECT_EQ(r.new_code, 2);
  EXPECT_GT(r.swapped_cells, 0);
  EXPECT_EQ(r.triptych.width, 3 * 32 + 4);
  EXPECT_GE(r.shape_iou, 0.0);
  EXPECT_LE(r.shape_iou, 1.0);
  const auto again = viz::attribute_swap(vae, image, bank.masks[0], 1, 0, -1, 5);
  EXPECT_NE(again.new_code, again.original_code);
  EXPECT_EQ(again.triptych.rgb, viz::attribute_swap(vae, image, bank.masks[0], 1, 0, -1, 5).triptych.rgb);
  EXPECT_THROW(viz::attribute_swap(vae, image, bank.masks[0], 1, 2, 0, 0), std::out_of_range);
  EXPECT_THROW(viz::attribute_swap(vae, image, bank.masks[0], 1, 0, 9, 0), std::out_of_range);
}

TEST(Viz, RibbonEdgesExportBothMatrices) {
  InvertibleProjection proj(3, 6, false, 1);
  const auto edges = viz::ribbon_edges(*proj);
  ASSERT_EQ(edges.size(), 2u * 3 * 6);
  torch::NoGradGuard guard;
  const auto pinv = proj->up_matrix();
  EXPECT_EQ(edges[0].stage, "up");
  EXPECT_DOUBLE_EQ(edges[7].weight, pinv[1][1].item<double>());
  EXPECT_EQ(edges[18].stage, "down");
  EXPECT_DOUBLE_EQ(edges[18 + 4].weight, proj->W[1][1].item<double>());
}

TEST(Viz, ObjectCodesAgreeWithSwap) {
  VaeConfig cfg;
  cfg.hidden = 8;
  cfg.quantizer.base_channels = 8;
  cfg.quantizer.expansion_rate = 2;
  cfg.quantizer.group_sizes = {4, 4};
  VaeModel vae(cfg, 3);
  auto spec = data::SceneSpec::fig1();
  spec.canvas = 32;
  spec.sizes = {5};
  std::mt19937_64 rng(2);
  const auto bank = ImageBank::from_samples({data::generate_scene(spec, rng)});
  const auto image = bank.images_float({0})[0];
  const auto codes = viz::object_codes(vae, image, bank.masks[0]);
  ASSERT_FALSE(codes.empty());
  EXPECT_EQ(codes.count(0), 0u);
  for (const auto& [label, tuple] : codes) {
    ASSERT_EQ(tuple.size(), 2u);
    for (int64_t g = 0; g < 2; ++g)
      EXPECT_EQ(viz::attribute_swap(vae, image, bank.masks[0], label, g, 0, 0).original_code, tuple[g]);
  }
}

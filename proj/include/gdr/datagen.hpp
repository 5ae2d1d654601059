#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace gdr::data {

enum class ShapeKind { Square, Circle, Triangle, Diamond };
enum class Background { Flat, Checker };

std::string to_string(ShapeKind s);
ShapeKind parse_shape(const std::string& s);

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Attribute-factorized scene world: every object is a (color, shape, size)
/// triple drawn from the axes below.
struct SceneSpec {
  int canvas = 64;
  int min_objects = 2;
  int max_objects = 4;
  std::vector<Rgb> palette;
  std::vector<ShapeKind> shapes;
  std::vector<int> sizes;  // half-extent in pixels
  Background background = Background::Flat;
  bool occlusion = false;

  void validate() const;
  /// Axis sizes that actually vary, in (color, shape, size) order.
  std::vector<int64_t> radices() const;
  int combinations() const { return static_cast<int>(palette.size() * shapes.size() * sizes.size()); }

  /// 64x64, 2-4 objects, 6 colors x 4 shapes x 2 sizes.
  static SceneSpec desk_default();
  /// Black/white x triangle/square/circle, one size.
  static SceneSpec fig1();
  static SceneSpec preset(const std::string& name);
};

nlohmann::json to_json(const SceneSpec& spec);
SceneSpec spec_from_json(const nlohmann::json& j);

struct ObjectAttributes {
  int color = 0;
  int shape = 0;
  int size = 0;
  bool operator==(const ObjectAttributes&) const = default;
};

struct SceneObject {
  ObjectAttributes attributes;
  int x = 0, y = 0;    // center
  int vx = 0, vy = 0;  // pixels per frame
};

/// Image is (H, W, 3) uint8 row-major; mask is (H, W) with 0 = background and
/// object i (1-based, back to front) labelled i.
struct SceneSample {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> image;
  std::vector<int32_t> mask;
  std::vector<SceneObject> objects;
};

/// (color, shape) combinations withheld from training.
struct OodRule {
  std::vector<std::pair<int, int>> held_out;
  bool holds(int color, int shape) const;
};

enum class AttributeConstraint { None, ExcludeHeldOut, RequireHeldOut };

/// Raised when objects cannot be placed on the canvas.
class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SceneSample generate_scene(const SceneSpec& spec, std::mt19937_64& rng, const OodRule& rule = {},
                           AttributeConstraint constraint = AttributeConstraint::None);

/// Frames of a scene whose objects move by their integer velocity each frame.
/// Trajectories stay on canvas and never overlap, so every object is visible in
/// every frame and keeps its label.
std::vector<SceneSample> generate_video(const SceneSpec& spec, int frames, std::mt19937_64& rng);

/// Renders the given objects back to front; drops fully hidden ones.
SceneSample render_scene(const SceneSpec& spec, std::vector<SceneObject> objects);

struct SplitSizes {
  int train = 0;
  int val = 0;
  int ood = 0;
};

/// Writes <root>/{train,val,ood}/ with a manifest.json and one GDRT file per
/// sample. train/val exclude held-out combinations; every ood scene contains at
/// least one. With an empty rule the ood split is drawn like val.
void generate_split(const SceneSpec& spec, const SplitSizes& sizes, const OodRule& rule, uint64_t seed,
                    const std::filesystem::path& root);

struct Dataset {
  SceneSpec spec;
  OodRule rule;
  std::string split;
  uint64_t seed = 0;
  std::vector<SceneSample> samples;
};

/// Loads one split directory (the one holding manifest.json).
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace gdr::data

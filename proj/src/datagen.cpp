#include "gdr/datagen.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "gdr/rng.hpp"
#include "gdr/tensor_io.hpp"

namespace gdr::data {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kMaxPlacementAttempts = 100;
constexpr int kMaxVelocity = 2;
constexpr Rgb kFlatBackground{128, 128, 128};
constexpr Rgb kCheckerDark{96, 96, 96};
constexpr Rgb kCheckerLight{160, 160, 160};
constexpr int kCheckerCell = 8;

bool covers(ShapeKind shape, int dx, int dy, int r) {
  switch (shape) {
    case ShapeKind::Square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case ShapeKind::Circle: return dx * dx + dy * dy <= r * r + r;
    case ShapeKind::Triangle: return dy >= -r && dy <= r && 2 * std::abs(dx) <= dy + r;
    case ShapeKind::Diamond: return std::abs(dx) + std::abs(dy) <= r;
  }
  return false;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

ObjectAttributes draw_attributes(const SceneSpec& spec, std::mt19937_64& rng, const OodRule& rule, bool exclude) {
  const int nc = static_cast<int>(spec.palette.size());
  const int ns = static_cast<int>(spec.shapes.size());
  const int nz = static_cast<int>(spec.sizes.size());
  for (int attempt = 0; attempt < 10000; ++attempt) {
    ObjectAttributes a{uniform_int(rng, 0, nc - 1), uniform_int(rng, 0, ns - 1), uniform_int(rng, 0, nz - 1)};
    if (!exclude || !rule.holds(a.color, a.shape)) return a;
  }
  throw std::logic_error("attribute sampling failed; every combination held out?");
}

struct Box {
  int x0, y0, x1, y1;
  bool overlaps(const Box& o, int gap) const {
    return !(x1 + gap < o.x0 || o.x1 + gap < x0 || y1 + gap < o.y0 || o.y1 + gap < y0);
  }
};

Box box_of(const SceneSpec& spec, const SceneObject& o, int frame = 0) {
  const int r = spec.sizes[o.attributes.size];
  const int x = o.x + frame * o.vx;
  const int y = o.y + frame * o.vy;
  return {x - r, y - r, x + r, y + r};
}

bool on_canvas(const SceneSpec& spec, const Box& b) {
  return b.x0 >= 0 && b.y0 >= 0 && b.x1 < spec.canvas && b.y1 < spec.canvas;
}

std::vector<ObjectAttributes> draw_scene_attributes(const SceneSpec& spec, std::mt19937_64& rng,
                                                    const OodRule& rule, AttributeConstraint constraint) {
  const int count = uniform_int(rng, spec.min_objects, spec.max_objects);
  std::vector<ObjectAttributes> attrs;
  const bool exclude = constraint == AttributeConstraint::ExcludeHeldOut;
  for (int i = 0; i < count; ++i) attrs.push_back(draw_attributes(spec, rng, rule, exclude));
  if (constraint == AttributeConstraint::RequireHeldOut) {
    if (rule.held_out.empty()) throw std::invalid_argument("RequireHeldOut with an empty held-out set");
    const bool any = std::any_of(attrs.begin(), attrs.end(), [&](const auto& a) { return rule.holds(a.color, a.shape); });
    if (!any) {
      const auto& [c, s] = rule.held_out[uniform_int(rng, 0, static_cast<int>(rule.held_out.size()) - 1)];
      auto& target = attrs[uniform_int(rng, 0, count - 1)];
      target.color = c;
      target.shape = s;
    }
  }
  return attrs;
}

/// Places objects one by one; each may retry kMaxPlacementAttempts times.
std::vector<SceneObject> place(const SceneSpec& spec, std::mt19937_64& rng, const std::vector<ObjectAttributes>& attrs,
                               int frames) {
  std::vector<SceneObject> placed;
  for (const auto& a : attrs) {
    const int r = spec.sizes[a.size];
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      SceneObject o;
      o.attributes = a;
      o.x = uniform_int(rng, r, spec.canvas - 1 - r);
      o.y = uniform_int(rng, r, spec.canvas - 1 - r);
      if (frames > 1) {
        o.vx = uniform_int(rng, -kMaxVelocity, kMaxVelocity);
        o.vy = uniform_int(rng, -kMaxVelocity, kMaxVelocity);
      }
      ok = true;
      for (int f = 0; f < frames && ok; ++f) {
        const Box b = box_of(spec, o, f);
        if (!on_canvas(spec, b)) ok = false;
        if (!spec.occlusion || frames > 1) {
          for (const auto& p : placed)
            if (b.overlaps(box_of(spec, p, f), 1)) ok = false;
        }
      }
      if (ok) placed.push_back(o);
    }
    if (!ok) {
      throw PlacementError("could not place object " + std::to_string(placed.size() + 1) + " of " +
                           std::to_string(attrs.size()) + " on a " + std::to_string(spec.canvas) + "px canvas after " +
                           std::to_string(kMaxPlacementAttempts) + " attempts");
    }
  }
  return placed;
}

SceneSample render_frame(const SceneSpec& spec, const std::vector<SceneObject>& objects, int frame) {
  const int n = spec.canvas;
  SceneSample s;
  s.height = s.width = n;
  s.image.resize(static_cast<size_t>(n) * n * 3);
  s.mask.assign(static_cast<size_t>(n) * n, 0);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      Rgb c = kFlatBackground;
      if (spec.background == Background::Checker)
        c = ((x / kCheckerCell + y / kCheckerCell) % 2 == 0) ? kCheckerDark : kCheckerLight;
      auto* px = &s.image[(static_cast<size_t>(y) * n + x) * 3];
      px[0] = c.r, px[1] = c.g, px[2] = c.b;
    }
  }
  for (size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    const int r = spec.sizes[o.attributes.size];
    const Rgb c = spec.palette[o.attributes.color];
    const ShapeKind shape = spec.shapes[o.attributes.shape];
    const int cx = o.x + frame * o.vx;
    const int cy = o.y + frame * o.vy;
    for (int y = std::max(0, cy - r); y <= std::min(n - 1, cy + r); ++y) {
      for (int x = std::max(0, cx - r); x <= std::min(n - 1, cx + r); ++x) {
        if (!covers(shape, x - cx, y - cy, r)) continue;
        const size_t p = static_cast<size_t>(y) * n + x;
        s.mask[p] = static_cast<int32_t>(i + 1);
        s.image[p * 3] = c.r, s.image[p * 3 + 1] = c.g, s.image[p * 3 + 2] = c.b;
      }
    }
  }
  // Drop fully hidden objects and relabel contiguously.
  std::vector<int64_t> visible(objects.size() + 1, 0);
  for (int32_t m : s.mask) ++visible[m];
  std::vector<int32_t> relabel(objects.size() + 1, 0);
  for (size_t i = 0; i < objects.size(); ++i) {
    if (visible[i + 1] == 0) continue;
    s.objects.push_back(objects[i]);
    relabel[i + 1] = static_cast<int32_t>(s.objects.size());
  }
  for (auto& m : s.mask) m = relabel[m];
  return s;
}

json attributes_json(const SceneSample& s) {
  json objs = json::array();
  for (const auto& o : s.objects) {
    objs.push_back({{"color", o.attributes.color},
                    {"shape", o.attributes.shape},
                    {"size", o.attributes.size},
                    {"x", o.x},
                    {"y", o.y}});
  }
  return objs;
}

json rgb_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }

}  // namespace

std::string to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::Square: return "square";
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Diamond: return "diamond";
  }
  return "?";
}

ShapeKind parse_shape(const std::string& s) {
  if (s == "square") return ShapeKind::Square;
  if (s == "circle") return ShapeKind::Circle;
  if (s == "triangle") return ShapeKind::Triangle;
  if (s == "diamond") return ShapeKind::Diamond;
  throw std::invalid_argument("unknown shape '" + s + "'");
}

void SceneSpec::validate() const {
  if (canvas < 4) throw std::invalid_argument("canvas must be at least 4 pixels");
  if (min_objects < 1 || max_objects < min_objects)
    throw std::invalid_argument("object count range must satisfy 1 <= min <= max");
  if (palette.empty() || shapes.empty() || sizes.empty())
    throw std::invalid_argument("palette, shapes and sizes must be non-empty");
  for (int r : sizes)
    if (r < 1 || 2 * r + 1 > canvas) throw std::invalid_argument("object size does not fit the canvas");
}

std::vector<int64_t> SceneSpec::radices() const {
  std::vector<int64_t> r;
  for (size_t n : {palette.size(), shapes.size(), sizes.size()})
    if (n > 1) r.push_back(static_cast<int64_t>(n));
  return r;
}

SceneSpec SceneSpec::desk_default() {
  SceneSpec s;
  s.palette = {{220, 40, 40}, {40, 180, 60}, {50, 80, 220}, {230, 210, 40}, {200, 50, 200}, {40, 200, 210}};
  s.shapes = {ShapeKind::Square, ShapeKind::Circle, ShapeKind::Triangle, ShapeKind::Diamond};
  s.sizes = {5, 8};
  return s;
}

SceneSpec SceneSpec::fig1() {
  SceneSpec s;
  s.palette = {{20, 20, 20}, {235, 235, 235}};
  s.shapes = {ShapeKind::Triangle, ShapeKind::Square, ShapeKind::Circle};
  s.sizes = {7};
  return s;
}

SceneSpec SceneSpec::preset(const std::string& name) {
  if (name == "default" || name == "desk") return desk_default();
  if (name == "fig1") return fig1();
  throw std::invalid_argument("unknown scene preset '" + name + "' (expected default or fig1)");
}

json to_json(const SceneSpec& spec) {
  json palette = json::array();
  for (const auto& c : spec.palette) palette.push_back(rgb_json(c));
  json shapes = json::array();
  for (auto s : spec.shapes) shapes.push_back(to_string(s));
  return {{"canvas", spec.canvas},
          {"min_objects", spec.min_objects},
          {"max_objects", spec.max_objects},
          {"palette", palette},
          {"shapes", shapes},
          {"sizes", spec.sizes},
          {"background", spec.background == Background::Flat ? "flat" : "checker"},
          {"occlusion", spec.occlusion}};
}

SceneSpec spec_from_json(const json& j) {
  SceneSpec s;
  s.canvas = j.at("canvas").get<int>();
  s.min_objects = j.at("min_objects").get<int>();
  s.max_objects = j.at("max_objects").get<int>();
  for (const auto& c : j.at("palette")) s.palette.push_back({c.at(0).get<uint8_t>(), c.at(1).get<uint8_t>(), c.at(2).get<uint8_t>()});
  for (const auto& sh : j.at("shapes")) s.shapes.push_back(parse_shape(sh.get<std::string>()));
  s.sizes = j.at("sizes").get<std::vector<int>>();
  const auto bg = j.at("background").get<std::string>();
  if (bg == "flat") s.background = Background::Flat;
  else if (bg == "checker") s.background = Background::Checker;
  else throw std::invalid_argument("unknown background '" + bg + "'");
  s.occlusion = j.at("occlusion").get<bool>();
  s.validate();
  return s;
}

bool OodRule::holds(int color, int shape) const {
  return std::find(held_out.begin(), held_out.end(), std::pair{color, shape}) != held_out.end();
}

SceneSample render_scene(const SceneSpec& spec, std::vector<SceneObject> objects) {
  spec.validate();
  return render_frame(spec, objects, 0);
}

SceneSample generate_scene(const SceneSpec& spec, std::mt19937_64& rng, const OodRule& rule,
                           AttributeConstraint constraint) {
  spec.validate();
  const auto attrs = draw_scene_attributes(spec, rng, rule, constraint);
  return render_frame(spec, place(spec, rng, attrs, 1), 0);
}

std::vector<SceneSample> generate_video(const SceneSpec& spec, int frames, std::mt19937_64& rng) {
  spec.validate();
  if (frames < 1) throw std::invalid_argument("video needs at least one frame");
  const auto attrs = draw_scene_attributes(spec, rng, {}, AttributeConstraint::None);
  const auto objects = place(spec, rng, attrs, frames);
  std::vector<SceneSample> out;
  for (int f = 0; f < frames; ++f) out.push_back(render_frame(spec, objects, f));
  return out;
}

void generate_split(const SceneSpec& spec, const SplitSizes& sizes, const OodRule& rule, uint64_t seed,
                    const fs::path& root) {
  spec.validate();
  const int pairs = static_cast<int>(spec.palette.size() * spec.shapes.size());
  for (const auto& [c, s] : rule.held_out) {
    if (c < 0 || s < 0 || c >= static_cast<int>(spec.palette.size()) || s >= static_cast<int>(spec.shapes.size()))
      throw std::invalid_argument("held-out combination outside the attribute ranges");
  }
  auto unique = rule.held_out;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  if (static_cast<int>(unique.size()) >= pairs)
    throw std::invalid_argument("every (color, shape) combination is held out; the training split would be empty");

  json rule_json = json::array();
  for (const auto& [c, s] : unique) rule_json.push_back({c, s});

  struct Split {
    const char* name;
    int count;
    AttributeConstraint constraint;
    uint64_t stream;
  };
  const AttributeConstraint id = unique.empty() ? AttributeConstraint::None : AttributeConstraint::ExcludeHeldOut;
  const AttributeConstraint ood = unique.empty() ? AttributeConstraint::None : AttributeConstraint::RequireHeldOut;
  const Split splits[] = {{"train", sizes.train, id, 1}, {"val", sizes.val, id, 2}, {"ood", sizes.ood, ood, 3}};

  for (const auto& split : splits) {
    const fs::path dir = root / split.name;
    fs::create_directories(dir);
    json samples = json::array();
    const uint64_t split_seed = derive_seed(seed, split.stream);
    for (int i = 0; i < split.count; ++i) {
      std::mt19937_64 rng(derive_seed(split_seed, static_cast<uint64_t>(i)));
      const SceneSample s = generate_scene(spec, rng, rule, split.constraint);
      char name[32];
      std::snprintf(name, sizeof(name), "%06d.gdrt", i);
      io::write_tensor_file(dir / name, {io::RawTensor::from(io::DType::UInt8, {s.height, s.width, 3}, s.image),
                                         io::RawTensor::from(io::DType::Int32, {s.height, s.width}, s.mask)});
      samples.push_back({{"file", name}, {"objects", attributes_json(s)}});
    }
    const json manifest = {{"format", "gdr-scenes"},
                           {"version", 1},
                           {"split", split.name},
                           {"seed", seed},
                           {"spec", to_json(spec)},
                           {"radices", spec.radices()},
                           {"held_out", rule_json},
                           {"samples", samples}};
    std::ofstream(dir / "manifest.json") << manifest.dump(1) << '\n';
  }
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("no manifest.json in " + dir.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  Dataset d;
  d.spec = spec_from_json(m.at("spec"));
  d.split = m.at("split").get<std::string>();
  d.seed = m.at("seed").get<uint64_t>();
  for (const auto& p : m.at("held_out")) d.rule.held_out.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  for (const auto& entry : m.at("samples")) {
    const auto records = io::read_tensor_file(dir / entry.at("file").get<std::string>());
    if (records.size() != 2 || records[0].dtype != io::DType::UInt8 || records[1].dtype != io::DType::Int32 ||
        records[0].shape.size() != 3 || records[0].shape[2] != 3)
      throw io::FormatError("unexpected sample layout in " + entry.at("file").get<std::string>());
    SceneSample s;
    s.height = static_cast<int>(records[0].shape[0]);
    s.width = static_cast<int>(records[0].shape[1]);
    s.image = records[0].values<uint8_t>();
    s.mask = records[1].values<int32_t>();
    for (const auto& o : entry.at("objects")) {
      SceneObject obj;
      obj.attributes = {o.at("color").get<int>(), o.at("shape").get<int>(), o.at("size").get<int>()};
      obj.x = o.at("x").get<int>();
      obj.y = o.at("y").get<int>();
      s.objects.push_back(obj);
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace gdr::data

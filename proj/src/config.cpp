#include "gdr/config.hpp"

#include <fstream>
#include <sstream>

namespace gdr {

using nlohmann::json;

namespace {

const json& defaults() {
  static const json d = {
      {"seed", 0},
      {"out", ""},
      // data
      {"data.dir", ""},
      {"data.preset", "default"},
      {"data.canvas", 64},
      {"data.min_objects", 2},
      {"data.max_objects", 4},
      {"data.background", "flat"},
      {"data.occlusion", false},
      {"data.train", 2000},
      {"data.val", 256},
      {"data.ood", 256},
      {"data.held_out", "0:0,1:1,2:2,3:3,4:0,5:1"},
      // quantizer
      {"quantizer.mode", "vqvae"},
      {"quantizer.temperature", 1.0},
      {"quantizer.temperature_decay", false},
      {"quantizer.epsilon", 1e-5},
      {"quantizer.base_channels", 32},
      {"quantizer.expansion_rate", 8},
      {"quantizer.group_sizes", "8,8"},
      {"quantizer.projection", "invertible"},
      {"quantizer.residual", true},
      {"quantizer.normalize", true},
      {"quantizer.utilization_weight", 0.1},
      {"quantizer.codebook_weight", 1.0},
      {"quantizer.commitment_weight", 0.25},
      // vae
      {"vae.checkpoint", ""},
      {"vae.hidden", 64},
      {"vae.steps", 15000},
      {"vae.batch_size", 32},
      {"vae.lr", 3e-4},
      {"vae.gumbel_noise", true},
      {"vae.log_every", 100},
      // ocl
      {"ocl.checkpoint", ""},
      {"ocl.num_slots", 5},
      {"ocl.slot_dim", 64},
      {"ocl.slot_iters", 3},
      {"ocl.encoder_hidden", 64},
      {"ocl.decoder_layers", 4},
      {"ocl.decoder_heads", 4},
      {"ocl.decoder_width", 192},
      {"ocl.steps", 30000},
      {"ocl.batch_size", 32},
      {"ocl.lr", 3e-4},
      {"ocl.warmup", 0},
      {"ocl.grad_clip", 1.0},
      {"ocl.eval_every", 500},
      {"ocl.eval_samples", 256},
      // eval / viz / report
      {"eval.split", "val"},
      {"eval.predictions", ""},
      {"viz.sample", 0},
      {"viz.group", 0},
      {"viz.object", 1},
      {"viz.scale", 4},
      {"report.dir", ""},
  };
  return d;
}

void flatten(const json& j, const std::string& prefix, json& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) flatten(v, key, out);
    else out[key] = v;
  }
}

json convert(const json& like, const std::string& key, const std::string& text) {
  try {
    size_t pos = 0;
    if (like.is_boolean()) {
      if (text == "true" || text == "1" || text == "on") return true;
      if (text == "false" || text == "0" || text == "off") return false;
      throw ConfigError("");
    }
    if (like.is_number_integer()) {
      const long long v = std::stoll(text, &pos);
      if (pos != text.size()) throw ConfigError("");
      return v;
    }
    if (like.is_number()) {
      const double v = std::stod(text, &pos);
      if (pos != text.size()) throw ConfigError("");
      return v;
    }
    return text;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + text + "' for " + key + " (expected " + std::string(like.type_name()) + ")");
  }
}

bool compatible(const json& like, const json& v) {
  if (like.is_boolean()) return v.is_boolean();
  if (like.is_number_integer()) return v.is_number_integer();
  if (like.is_number()) return v.is_number();
  return v.is_string();
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, _] : defaults().items()) out.push_back(key);
    return out;
  }();
  return k;
}

void RunConfig::merge(const json& object) {
  if (!object.is_object()) throw ConfigError("config must be a JSON object");
  json flat = json::object();
  flatten(object, "", flat);
  for (const auto& [key, v] : flat.items()) {
    if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    const auto& like = defaults().at(key);
    if (!compatible(like, v)) {
      throw ConfigError("config key " + key + " expects " + std::string(like.type_name()) + ", got " +
                        std::string(v.type_name()));
    }
    values_[key] = v;
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    merge(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config file " + path.string() + ": " + e.what());
  }
}

void RunConfig::set(const std::string& key, const std::string& text) {
  if (!values_.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = convert(defaults().at(key), key, text);
}

const json& RunConfig::raw(const std::string& key) const {
  if (!values_.contains(key)) throw std::logic_error("no config key " + key);
  return values_.at(key);
}

std::string RunConfig::str(const std::string& key) const { return raw(key).get<std::string>(); }
int64_t RunConfig::integer(const std::string& key) const { return raw(key).get<int64_t>(); }
double RunConfig::real(const std::string& key) const { return raw(key).get<double>(); }
bool RunConfig::flag(const std::string& key) const { return raw(key).get<bool>(); }
std::vector<int64_t> RunConfig::int_list(const std::string& key) const { return parse_int_list(str(key)); }

RunConfig RunConfig::with_seed(uint64_t seed) const {
  RunConfig out = *this;
  out.values_["seed"] = seed;
  for (auto& [key, v] : out.values_.items()) {
    if (!v.is_string()) continue;
    std::string s = v.get<std::string>();
    for (size_t pos; (pos = s.find("{seed}")) != std::string::npos;) s.replace(pos, 6, std::to_string(seed));
    v = s;
  }
  return out;
}

std::vector<int64_t> parse_int_list(const std::string& text) {
  std::vector<int64_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      size_t pos = 0;
      out.push_back(std::stoll(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ConfigError("invalid integer list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty integer list");
  return out;
}

data::OodRule parse_held_out(const std::string& text) {
  data::OodRule rule;
  if (text.empty() || text == "none") return rule;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("held-out entries must look like color:shape, got '" + item + "'");
    try {
      rule.held_out.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError("invalid held-out entry '" + item + "'");
    }
  }
  return rule;
}

VaeConfig vae_config(const RunConfig& cfg) {
  VaeConfig v;
  auto& q = v.quantizer;
  try {
    q.mode = parse_quantizer_mode(cfg.str("quantizer.mode"));
    q.projection = parse_projection_kind(cfg.str("quantizer.projection"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  q.temperature = cfg.real("quantizer.temperature");
  q.epsilon = cfg.real("quantizer.epsilon");
  q.base_channels = cfg.integer("quantizer.base_channels");
  q.expansion_rate = cfg.integer("quantizer.expansion_rate");
  q.group_sizes = cfg.int_list("quantizer.group_sizes");
  q.residual_enabled = cfg.flag("quantizer.residual");
  q.final_normalize = cfg.flag("quantizer.normalize");
  q.utilization_weight = cfg.real("quantizer.utilization_weight");
  q.codebook_weight = cfg.real("quantizer.codebook_weight");
  q.commitment_weight = cfg.real("quantizer.commitment_weight");
  v.hidden = cfg.integer("vae.hidden");
  try {
    v.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return v;
}

PretrainOptions pretrain_options(const RunConfig& cfg) {
  PretrainOptions o;
  o.steps = cfg.integer("vae.steps");
  o.batch_size = cfg.integer("vae.batch_size");
  o.learning_rate = cfg.real("vae.lr");
  o.gumbel_noise = cfg.flag("vae.gumbel_noise");
  o.temperature_decay = cfg.flag("quantizer.temperature_decay");
  o.log_every = cfg.integer("vae.log_every");
  o.seed = static_cast<uint64_t>(cfg.integer("seed"));
  return o;
}

OclConfig ocl_config(const RunConfig& cfg) {
  OclConfig o;
  o.num_slots = cfg.integer("ocl.num_slots");
  o.slot_dim = cfg.integer("ocl.slot_dim");
  o.slot_iters = cfg.integer("ocl.slot_iters");
  o.encoder_hidden = cfg.integer("ocl.encoder_hidden");
  o.decoder_layers = cfg.integer("ocl.decoder_layers");
  o.decoder_heads = cfg.integer("ocl.decoder_heads");
  o.decoder_width = cfg.integer("ocl.decoder_width");
  try {
    o.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return o;
}

OclTrainOptions ocl_train_options(const RunConfig& cfg) {
  OclTrainOptions o;
  o.steps = cfg.integer("ocl.steps");
  o.batch_size = cfg.integer("ocl.batch_size");
  o.learning_rate = cfg.real("ocl.lr");
  o.warmup_steps = cfg.integer("ocl.warmup");
  o.grad_clip = cfg.real("ocl.grad_clip");
  o.eval_every = cfg.integer("ocl.eval_every");
  o.eval_samples = cfg.integer("ocl.eval_samples");
  o.seed = static_cast<uint64_t>(cfg.integer("seed"));
  return o;
}

data::SceneSpec scene_spec(const RunConfig& cfg) {
  data::SceneSpec s;
  try {
    s = data::SceneSpec::preset(cfg.str("data.preset"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  s.canvas = static_cast<int>(cfg.integer("data.canvas"));
  s.min_objects = static_cast<int>(cfg.integer("data.min_objects"));
  s.max_objects = static_cast<int>(cfg.integer("data.max_objects"));
  const auto bg = cfg.str("data.background");
  if (bg == "flat") s.background = data::Background::Flat;
  else if (bg == "checker") s.background = data::Background::Checker;
  else throw ConfigError("data.background must be flat or checker");
  s.occlusion = cfg.flag("data.occlusion");
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return s;
}

data::OodRule ood_rule(const RunConfig& cfg) { return parse_held_out(cfg.str("data.held_out")); }

data::SplitSizes split_sizes(const RunConfig& cfg) {
  data::SplitSizes s{static_cast<int>(cfg.integer("data.train")), static_cast<int>(cfg.integer("data.val")),
                     static_cast<int>(cfg.integer("data.ood"))};
  if (s.train < 0 || s.val < 0 || s.ood < 0) throw ConfigError("split sizes must be >= 0");
  return s;
}

}  // namespace gdr

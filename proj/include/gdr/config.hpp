#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gdr/datagen.hpp"
#include "gdr/ocl.hpp"
#include "gdr/vae.hpp"

namespace gdr {

/// Bad key or value supplied by the user; the CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Flat dotted-key configuration ("vae.steps": 15000, ...). Every key has a
/// typed default; unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  /// Merges a JSON object of dotted keys (nested objects are flattened).
  void merge_file(const std::filesystem::path& path);
  void merge(const nlohmann::json& object);
  /// Sets one key from command-line text, converting to the default's type.
  void set(const std::string& key, const std::string& text);

  bool has(const std::string& key) const { return values_.contains(key); }
  const nlohmann::json& raw(const std::string& key) const;
  std::string str(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<int64_t> int_list(const std::string& key) const;

  const nlohmann::json& values() const { return values_; }
  std::string dump() const { return values_.dump(2); }
  /// Returns a copy with "{seed}" in every string value replaced.
  RunConfig with_seed(uint64_t seed) const;

  static const std::vector<std::string>& keys();

 private:
  nlohmann::json values_;
};

VaeConfig vae_config(const RunConfig& cfg);
PretrainOptions pretrain_options(const RunConfig& cfg);
OclConfig ocl_config(const RunConfig& cfg);
OclTrainOptions ocl_train_options(const RunConfig& cfg);
data::SceneSpec scene_spec(const RunConfig& cfg);
data::OodRule ood_rule(const RunConfig& cfg);
data::SplitSizes split_sizes(const RunConfig& cfg);

/// Parses "c:s,c:s" held-out lists.
data::OodRule parse_held_out(const std::string& text);
std::vector<int64_t> parse_int_list(const std::string& text);

}  // namespace gdr

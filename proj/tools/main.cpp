#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>

#include "gdr/config.hpp"
#include "gdr/datagen.hpp"
#include "gdr/module_io.hpp"
#include "gdr/ocl.hpp"
#include "gdr/rng.hpp"
#include "gdr/tensor_io.hpp"
#include "gdr/vae.hpp"
#include "gdr/run_checkpoint.hpp"
#include "gdr/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gdr;

namespace {

/// Invalid command line; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::map<std::string, std::string>& aliases() {
  static const std::map<std::string, std::string> a = {
      {"preset", "data.preset"}, {"data", "data.dir"}, {"vae", "vae.checkpoint"},
      {"ocl", "ocl.checkpoint"}, {"split", "eval.split"}, {"predictions", "eval.predictions"},
      {"group", "viz.group"},    {"sample", "viz.sample"}, {"dir", "report.dir"},
  };
  return a;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& extras) {
  for (size_t i = 0; i < extras.size(); ++i) {
    std::string arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    arg = arg.substr(2);
    std::string value;
    if (const auto eq = arg.find('='); eq != std::string::npos) {
      value = arg.substr(eq + 1);
      arg = arg.substr(0, eq);
    } else {
      if (i + 1 >= extras.size()) throw UsageError("option --" + arg + " needs a value");
      value = extras[++i];
    }
    if (const auto it = aliases().find(arg); it != aliases().end()) arg = it->second;
    cfg.set(arg, value);
  }
}

fs::path resolve_out(const RunConfig& cfg, const std::string& fallback) {
  std::string out = cfg.str("out");
  if (out.empty()) out = fallback;
  fs::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("GDR_OUT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

fs::path require_path(const RunConfig& cfg, const std::string& key, const std::string& what) {
  const std::string v = cfg.str(key);
  if (v.empty()) throw UsageError("missing --" + key + " (" + what + ")");
  return v;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_resolved_config(const fs::path& out, const RunConfig& cfg) {
  fs::create_directories(out);
  write_json(out / "config.json", cfg.values());
}

json scores_json(const metrics::ObjectDiscoveryScores& s) {
  return {{"ari", s.ari}, {"ari_fg", s.ari_fg}, {"mbo", s.mbo}, {"miou", s.miou}, {"degenerate", s.degenerate}};
}

void print_table(const std::vector<std::pair<std::string, metrics::ObjectDiscoveryScores>>& rows) {
  std::cout << std::left << std::setw(12) << "split" << std::right << std::setw(9) << "ARI" << std::setw(9)
            << "ARI_fg" << std::setw(9) << "mBO" << std::setw(9) << "mIoU" << '\n';
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [name, s] : rows) {
    std::cout << std::left << std::setw(12) << name << std::right << std::setw(9) << s.ari << std::setw(9) << s.ari_fg
              << std::setw(9) << s.mbo << std::setw(9) << s.miou << '\n';
  }
  std::cout.unsetf(std::ios::fixed);
}

data::Dataset load_split(const RunConfig& cfg, const std::string& split) {
  const fs::path dir = require_path(cfg, "data.dir", "dataset directory from gen-data") / split;
  if (!fs::exists(dir / "manifest.json")) throw std::runtime_error("dataset split not found: " + dir.string());
  return data::load_dataset(dir);
}

// ---- commands ----
// Each returns the run's headline record, used for multi-seed summaries.

json cmd_gen_data(const RunConfig& cfg) {
  if (cfg.str("out").empty()) throw UsageError("gen-data needs --out <directory>");
  const auto out = resolve_out(cfg, "");
  const auto spec = scene_spec(cfg);
  const auto sizes = split_sizes(cfg);
  auto rule = ood_rule(cfg);
  // Drop held-out pairs the preset's axes cannot express (e.g. default list on fig1).
  const size_t requested = rule.held_out.size();
  std::erase_if(rule.held_out, [&](const auto& p) {
    return p.first >= static_cast<int>(spec.palette.size()) || p.second >= static_cast<int>(spec.shapes.size());
  });
  if (rule.held_out.size() < requested) {
    const bool explicit_list = cfg.str("data.held_out") != RunConfig().str("data.held_out");
    if (explicit_list && rule.held_out.empty())
      throw UsageError("no held-out pair in '" + cfg.str("data.held_out") + "' fits this preset");
    std::cerr << "note: dropped " << requested - rule.held_out.size()
              << " held-out pair(s) outside the preset's color/shape axes\n";
  }
  data::generate_split(spec, sizes, rule, static_cast<uint64_t>(cfg.integer("seed")), out);
  write_resolved_config(out, cfg);
  std::cout << "wrote " << sizes.train << "/" << sizes.val << "/" << sizes.ood << " train/val/ood scenes to " << out
            << "\nradices:";
  for (auto r : spec.radices()) std::cout << ' ' << r;
  std::cout << "\nheld out:";
  for (const auto& [c, s] : rule.held_out) std::cout << ' ' << c << ':' << s;
  std::cout << '\n';
  return {{"train", sizes.train}, {"val", sizes.val}, {"ood", sizes.ood}};
}

json cmd_pretrain_vae(const RunConfig& cfg) {
  const auto out = resolve_out(cfg, "runs/pretrain-vae");
  const auto train = ImageBank::from_dataset(load_split(cfg, "train"));
  const auto seed = static_cast<uint64_t>(cfg.integer("seed"));
  write_resolved_config(out, cfg);
  VaeModel vae(vae_config(cfg), seed);
  std::ofstream log(out / "pretrain.jsonl");
  const auto opts = pretrain_options(cfg);
  pretrain(vae, train, opts, [&](const PretrainRecord& r) {
    const json rec = {{"step", r.step}, {"reconstruction", r.reconstruction}, {"utilization", r.utilization},
                      {"vq", r.vq},     {"alpha", r.alpha},                   {"tau", r.tau},
                      {"perplexity", r.perplexity}};
    log << rec.dump() << std::endl;
    std::cerr << "[vae] step " << r.step << " rec " << r.reconstruction << '\n';
  });
  save_vae(out / "vae.gdrc", vae, cfg, static_cast<uint64_t>(opts.steps));
  const auto ev = evaluate_vae(vae, fs::exists(fs::path(cfg.str("data.dir")) / "val" / "manifest.json")
                                        ? ImageBank::from_dataset(load_split(cfg, "val"))
                                        : train);
  const json summary = {{"reconstruction", ev.reconstruction},
                        {"perplexity", ev.usage.perplexity},
                        {"mean_perplexity", [&] {
                           double s = 0;
                           for (double p : ev.usage.perplexity) s += p;
                           return s / static_cast<double>(ev.usage.perplexity.size());
                         }()},
                        {"feature_perplexity", ev.usage.feature_perplexity}};
  write_json(out / "summary.json", summary);
  std::cout << "VAE checkpoint " << (out / "vae.gdrc").string() << "\nreconstruction " << ev.reconstruction
            << "  per-group perplexity";
  for (double p : ev.usage.perplexity) std::cout << ' ' << p;
  std::cout << '\n';
  return summary;
}

json cmd_train_ocl(const RunConfig& cfg) {
  const auto out = resolve_out(cfg, "runs/train-ocl");
  auto vae = load_vae(require_path(cfg, "vae.checkpoint", "pretrained VAE")).model;
  const auto train = ImageBank::from_dataset(load_split(cfg, "train"));
  const auto val = ImageBank::from_dataset(load_split(cfg, "val"));
  const auto seed = static_cast<uint64_t>(cfg.integer("seed"));
  write_resolved_config(out, cfg);
  const auto& q = vae->config().quantizer;
  const int64_t vocab = radix_product(vae->quantizer()->codebook()->group_sizes());
  const int64_t image_size = train.images.size(1);
  OclModel model(ocl_config(cfg), image_size, q.base_channels, vocab, seed);
  std::ofstream log(out / "curve.jsonl");
  auto result = train_ocl(model, vae, train, &val, ocl_train_options(cfg), [&](const OclCurvePoint& p) {
    json rec = scores_json(p.val);
    rec["step"] = p.step;
    rec["loss"] = std::isfinite(p.loss) ? json(p.loss) : json(nullptr);
    log << rec.dump() << std::endl;
    std::cerr << "[ocl] step " << p.step << " ARI " << p.val.ari << " ARI_fg " << p.val.ari_fg << '\n';
  });
  save_ocl(out / "ocl.gdrc", model, cfg, static_cast<uint64_t>(cfg.integer("ocl.steps")), image_size,
           q.base_channels, vocab);
  std::ofstream smooth(out / "curve_smoothed.jsonl");
  for (size_t i = 0; i < result.curve.size(); ++i)
    smooth << json{{"step", result.curve[i].step}, {"ari_plus_ari_fg", result.smoothed_ari_sum[i]}}.dump() << '\n';
  const auto final_scores = evaluate_ocl(model, val, derive_seed(seed, 33));
  json rec = scores_json(final_scores);
  write_json(out / "metrics.json", rec);
  print_table({{"val", final_scores}});
  return rec;
}

json eval_predictions(const RunConfig& cfg, const data::Dataset& ds) {
  const fs::path pred_dir = cfg.str("eval.predictions");
  metrics::ScoreAccumulator acc;
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.gdrt", i);
    const auto recs = io::read_tensor_file(pred_dir / name);
    // A prediction file holds the mask as its last record.
    const auto& m = recs.back();
    if (m.dtype != io::DType::Int32) throw io::FormatError(std::string(name) + ": prediction mask must be int32");
    const auto pred = m.values<int32_t>();
    acc.add(metrics::evaluate({pred, ds.samples[i].mask}));
  }
  return scores_json(acc.mean());
}

json cmd_eval(const RunConfig& cfg) {
  const auto out = resolve_out(cfg, "runs/eval");
  const auto split = cfg.str("eval.split");
  const auto ds = load_split(cfg, split);
  write_resolved_config(out, cfg);
  json rec;
  if (!cfg.str("eval.predictions").empty()) {
    rec = eval_predictions(cfg, ds);
  } else {
    auto ocl = load_ocl(require_path(cfg, "ocl.checkpoint", "trained OCL model"));
    rec = scores_json(evaluate_ocl(ocl.model, ImageBank::from_dataset(ds), derive_seed(cfg.integer("seed"), 33)));
  }
  write_json(out / "eval.json", rec);
  metrics::ObjectDiscoveryScores s{rec["ari"], rec["ari_fg"], rec["mbo"], rec["miou"], rec["degenerate"]};
  print_table({{split, s}});
  return rec;
}

json cmd_transfer_eval(const RunConfig& cfg) {
  const auto out = resolve_out(cfg, "runs/transfer-eval");
  auto ocl = load_ocl(require_path(cfg, "ocl.checkpoint", "trained OCL model"));
  const auto id = ImageBank::from_dataset(load_split(cfg, "val"));
  const auto ood = ImageBank::from_dataset(load_split(cfg, "ood"));
  write_resolved_config(out, cfg);
  const auto t = transfer_eval(ocl.model, id, ood, derive_seed(cfg.integer("seed"), 33));
  metrics::ObjectDiscoveryScores delta{t.id.ari - t.ood.ari, t.id.ari_fg - t.ood.ari_fg, t.id.mbo - t.ood.mbo,
                                       t.id.miou - t.ood.miou, 0};
  const json rec = {{"id", scores_json(t.id)}, {"ood", scores_json(t.ood)}, {"delta", scores_json(delta)},
                    {"drop", t.drop()}};
  write_json(out / "transfer.json", rec);
  print_table({{"id", t.id}, {"ood", t.ood}, {"id-ood", delta}});
  return rec;
}

json cmd_viz(const RunConfig& cfg) {
  const auto out = resolve_out(cfg, "runs/viz");
  auto loaded = load_vae(require_path(cfg, "vae.checkpoint", "pretrained VAE"));
  auto& vae = loaded.model;
  const auto ds = load_split(cfg, "val");
  const int64_t sample = cfg.integer("viz.sample");
  if (sample < 0 || sample >= static_cast<int64_t>(ds.samples.size()))
    throw UsageError("viz.sample out of range (split has " + std::to_string(ds.samples.size()) + " samples)");
  const int64_t group = cfg.integer("viz.group");
  const int64_t groups = vae->quantizer()->codebook()->num_groups();
  if (group < 0 || group >= groups)
    throw UsageError("viz.group " + std::to_string(group) + " out of range (model has " + std::to_string(groups) +
                     " groups)");
  const int scale = static_cast<int>(cfg.integer("viz.scale"));
  write_resolved_config(out, cfg);

  const auto bank = ImageBank::from_samples({ds.samples[static_cast<size_t>(sample)]});
  const int32_t object = static_cast<int32_t>(cfg.integer("viz.object"));
  const auto swap = viz::write_artifacts(
      vae, bank.images_float({0})[0], bank.masks[0],
      {group, object, scale, static_cast<uint64_t>(cfg.integer("seed"))}, out);
  const json rec = {{"group", swap.group},           {"object", object},
                    {"original_code", swap.original_code}, {"new_code", swap.new_code},
                    {"color_shift", swap.color_shift}, {"shape_iou", swap.shape_iou},
                    {"swapped_cells", swap.swapped_cells}};
  write_json(out / "swap.json", rec);
  std::cout << "wrote visualizations to " << out.string() << "\nswap group " << group << ": code "
            << swap.original_code << " -> " << swap.new_code << ", color shift " << swap.color_shift
            << ", shape IoU " << swap.shape_iou << '\n';
  return rec;
}

/// Flattens numeric leaves: {"id": {"ari": 1}} -> {"id.ari": 1}.
void numeric_leaves(const json& j, const std::string& prefix, std::map<std::string, double>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) numeric_leaves(v, key, out);
    else if (v.is_number()) out[key] = v.get<double>();
  }
}

struct Stat {
  double mean = 0, std = 0;
  size_t n = 0;
};

Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.n = xs.size();
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
  s.std = xs.size() > 1 ? std::sqrt(s.std / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

json cmd_report(const RunConfig& cfg) {
  const fs::path dir = require_path(cfg, "report.dir", "directory holding seed runs");
  if (!fs::is_directory(dir)) throw std::runtime_error("report directory not found: " + dir.string());
  const std::set<std::string> records = {"metrics.json", "eval.json", "transfer.json", "summary.json"};
  // experiment (path without seed_N components) / record file -> key -> values
  std::map<std::string, std::map<std::string, std::vector<double>>> table;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && records.count(e.path().filename().string())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    fs::path experiment;
    for (const auto& part : fs::relative(f.parent_path(), dir))
      if (part.string().rfind("seed_", 0) != 0 && part != ".") experiment /= part;
    const std::string name = (experiment / f.stem()).generic_string();
    std::ifstream in(f);
    std::map<std::string, double> leaves;
    numeric_leaves(json::parse(in), "", leaves);
    for (const auto& [k, v] : leaves) table[name][k].push_back(v);
  }
  if (table.empty()) throw std::runtime_error("no run records under " + dir.string());
  json rep = json::object();
  std::ofstream md(resolve_out(cfg, (dir / "report.md").string()));
  md << "| record | metric | mean | std | n |\n|---|---|---|---|---|\n";
  std::cout << std::left << std::setw(32) << "record" << std::setw(22) << "metric" << "mean ± std (n)\n";
  for (const auto& [name, metrics] : table) {
    for (const auto& [key, values] : metrics) {
      const auto s = stat_of(values);
      rep[name][key] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
      md << "| " << name << " | " << key << " | " << s.mean << " | " << s.std << " | " << s.n << " |\n";
      std::cout << std::left << std::setw(32) << name << std::setw(22) << key << s.mean << " ± " << s.std << " ("
                << s.n << ")\n";
    }
  }
  write_json(dir / "report.json", rep);
  return rep;
}

using Command = json (*)(const RunConfig&);

int run(const std::string& name, Command cmd, RunConfig cfg, int seeds) {
  if (seeds <= 1) {
    cmd(cfg);
    return 0;
  }
  if (name == "gen-data" || name == "report") throw UsageError("--seeds applies to training and evaluation commands");
  const auto base_seed = static_cast<uint64_t>(cfg.integer("seed"));
  const std::string out = cfg.str("out").empty() ? "runs/" + name : cfg.str("out");
  std::map<std::string, std::vector<double>> collected;
  for (int i = 0; i < seeds; ++i) {
    const uint64_t seed = base_seed + static_cast<uint64_t>(i);
    RunConfig run_cfg = cfg;
    if (out.find("{seed}") == std::string::npos) run_cfg.set("out", (fs::path(out) / "seed_{seed}").string());
    run_cfg = run_cfg.with_seed(seed);
    std::cout << "== seed " << seed << " ==\n";
    std::map<std::string, double> leaves;
    numeric_leaves(cmd(run_cfg), "", leaves);
    for (const auto& [k, v] : leaves) collected[k].push_back(v);
  }
  json summary = json::object();
  std::cout << "== summary over " << seeds << " seeds (mean ± std) ==\n";
  for (const auto& [k, values] : collected) {
    const auto s = stat_of(values);
    summary[k] = {{"mean", s.mean}, {"std", s.std}, {"values", values}};
    std::cout << std::left << std::setw(22) << k << s.mean << " ± " << s.std << '\n';
  }
  RunConfig summary_cfg = cfg;
  summary_cfg.set("out", out);
  const auto summary_dir = resolve_out(summary_cfg.with_seed(base_seed), "");
  if (out.find("{seed}") == std::string::npos) {
    fs::create_directories(summary_dir);
    write_json(summary_dir / "seeds_summary.json", summary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"Grouped discrete representation experiments"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::pair<Command, std::string>>> commands = {
      {"gen-data", {cmd_gen_data, "Generate a synthetic scene dataset (train/val/ood splits)"}},
      {"pretrain-vae", {cmd_pretrain_vae, "Pretrain the grouped discrete VAE"}},
      {"train-ocl", {cmd_train_ocl, "Train slot-attention OCL against a frozen VAE"}},
      {"eval", {cmd_eval, "Score a model (or prediction files) on one split"}},
      {"transfer-eval", {cmd_transfer_eval, "Compare in-distribution and OOD scores"}},
      {"viz", {cmd_viz, "Write index maps, separability map, attribute swap and ribbon data"}},
      {"report", {cmd_report, "Aggregate run records into mean ± std tables"}},
  };
  std::string config_file;
  int seeds = 1;
  std::vector<CLI::App*> subs;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.second);
    sub->allow_extras();
    sub->add_option("--config", config_file, "JSON file of dotted config keys");
    sub->add_option("--seeds", seeds, "Run N consecutive seeds and summarize")->check(CLI::PositiveNumber);
    sub->footer("Any config key can be overridden with --<key> <value>, e.g. --vae.steps 100.");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const auto& [name, entry] = commands[i];
    try {
      RunConfig cfg;
      if (!config_file.empty()) cfg.merge_file(config_file);
      apply_overrides(cfg, subs[i]->remaining());
      return run(name, entry.first, cfg, seeds);
    } catch (const UsageError& e) {
      std::cerr << "gdr " << name << ": " << e.what() << "\nRun 'gdr " << name << " --help' for usage.\n";
      return 2;
    } catch (const ConfigError& e) {
      std::cerr << "gdr " << name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "gdr " << name << ": error: " << e.what() << '\n';
      return 1;
    }
  }
  return 2;
}

// pfd command-line front end.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pfd/ablation.hpp"
#include "pfd/checkpoint.hpp"
#include "pfd/config.hpp"
#include "pfd/decoder.hpp"
#include "pfd/eval.hpp"
#include "pfd/pipeline.hpp"
#include "pfd/recipes.hpp"
#include "pfd/synthgen.hpp"

namespace fs = std::filesystem;
using namespace pfd;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "run configuration JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "seed override");
  cmd->add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
}

RunConfig load_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig::defaults() : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  cfg.sync();
  cfg.validate();
  return cfg;
}

DatasetManifest load_or_build(const std::string& data_dir, const DatasetConfig& cfg) {
  if (!data_dir.empty()) return load_dataset(data_dir);
  std::cerr << "generating dataset from configuration\n";
  return build_dataset(cfg);
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad sweep value: " + item);
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_values(text)) {
    if (v < 0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw std::invalid_argument("seeds must be non-negative integers");
    }
    out.push_back(static_cast<std::uint64_t>(v));
  }
  if (out.empty()) throw std::invalid_argument("no seeds given");
  return out;
}

std::optional<PoseOverrides> external_poses(const std::string& path, const RunConfig& cfg) {
  if (path.empty()) return std::nullopt;
  return pose_overrides(load_external_keypoints(path, cfg.data.num_keypoints,
                                                cfg.data.render.height, cfg.data.render.width,
                                                cfg.model.pose));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_gen_data(const CommonOptions& o) {
  RunConfig cfg = load_config(o);
  if (o.seed) cfg.data.seed = *o.seed;
  const DatasetManifest data = build_dataset(cfg.data);
  save_dataset(data, o.out_dir);
  std::cout << "wrote " << data.entries.size() << " images to " << o.out_dir << "\n";
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& data_dir) {
  const RunConfig cfg = load_config(o);
  const DatasetManifest data = load_or_build(data_dir, cfg.data);
  TrainOptions opts;
  opts.out_dir = fs::path(o.out_dir);
  opts.on_step = [](const StepMetrics& m) {
    if (m.step % 25 == 0) {
      std::fprintf(stderr, "step %4d epoch %3d lr %.2e  L_en %.4f  L_de %.4f  L_p %.4f  L %.4f\n",
                   m.step, m.epoch, m.lr, m.encoder, m.decoder, m.push, m.total);
    }
  };
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult result = train(cfg, data, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained " << result.metrics.size() << " steps in " << secs << " s\n";
  if (result.checkpoint) std::cout << "checkpoint: " << result.checkpoint->string() << "\n";
  const EvalResult r = evaluate(*result.model, cfg, data);
  write_eval_report(r, fs::path(o.out_dir) / "eval.json");
  std::cout << format_summary(r) << "\n";
  return 0;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint, const std::string& data_dir,
             const std::string& keypoints) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = ckpt.config;
  if (!o.config.empty()) cfg.data = load_run_config(o.config).data;
  if (o.seed) cfg.seed = *o.seed;
  const DatasetManifest data = load_or_build(data_dir, cfg.data);
  const std::optional<PoseOverrides> poses = external_poses(keypoints, cfg);
  const EvalResult r = evaluate(*ckpt.model, cfg, data, poses ? &*poses : nullptr);
  fs::create_directories(o.out_dir);
  write_eval_report(r, fs::path(o.out_dir) / "eval.json");
  std::cout << format_summary(r) << "\n";
  return 0;
}

int cmd_ablate(const CommonOptions& o, const std::string& param, const std::string& values,
               const std::string& seeds, bool parallel) {
  const RunConfig cfg = load_config(o);
  const SweepParameter p = sweep_parameter_from_string(param);
  if (p != SweepParameter::kModules && values.empty()) {
    throw std::invalid_argument("--values is required for parameter " + param);
  }
  AblationOptions opts;
  opts.seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seeds(seeds);
  opts.parallel = parallel;
  opts.progress = [](const std::string& line) { std::cerr << line << "\n"; };
  const AblationReport report =
      ablate(cfg, p, p == SweepParameter::kModules ? std::vector<double>{} : parse_values(values), opts);
  fs::create_directories(o.out_dir);
  write_text(fs::path(o.out_dir) / "table.txt", report.table());
  write_text(fs::path(o.out_dir) / "report.json", report.to_json().dump(2) + "\n");
  save_run_config(cfg, fs::path(o.out_dir) / "config.json");
  std::cout << report.table();
  return 0;
}

int cmd_export_attention(const CommonOptions& o, const std::string& checkpoint,
                         const std::string& data_dir, const std::string& keypoints,
                         std::vector<std::string> image_ids, int count) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint);
  RunConfig cfg = ckpt.config;
  if (!o.config.empty()) cfg.data = load_run_config(o.config).data;
  const DatasetManifest data = load_or_build(data_dir, cfg.data);
  const std::optional<PoseOverrides> poses = external_poses(keypoints, cfg);

  std::vector<std::size_t> picks;
  if (image_ids.empty()) {
    std::vector<std::size_t> pool = data.indices(Split::kQuery);
    if (pool.empty()) pool = data.indices(Split::kTrain);
    for (std::size_t i = 0; i < pool.size() && static_cast<int>(picks.size()) < count; ++i) {
      picks.push_back(pool[i]);
    }
  } else {
    for (const std::string& id : image_ids) {
      std::size_t i = 0;
      while (i < data.entries.size() && data.entries[i].image_id != id) ++i;
      if (i == data.entries.size()) throw std::invalid_argument("unknown image id: " + id);
      picks.push_back(i);
    }
  }

  fs::create_directories(o.out_dir);
  for (std::size_t idx : picks) {
    const ManifestEntry& e = data.entries[idx];
    HeatmapSet pose;
    if (poses && poses->count(e.image_id)) {
      pose = poses->at(e.image_id);
    } else {
      pose = pose_for_record(e.record, cfg.model.pose, cfg.train.pose_noise, cfg.seed + 1, idx);
    }
    const SampleForward f = ckpt.model->forward(e.record.image, e.record.camera_id, pose);
    write_attention_overlays(o.out_dir, e.image_id, e.record.image,
                             export_attention(f.decoder, cfg.model.encoder.patch));
    std::cout << "exported " << e.image_id << "\n";
  }
  return 0;
}

int cmd_run_recipe(const CommonOptions& o, const std::string& name, const std::string& seeds,
                   int steps, bool parallel, bool list) {
  if (list) {
    for (const ExperimentRecipe& r : recipe_registry()) {
      std::cout << r.name << "  " << r.description << "\n";
    }
    return 0;
  }
  if (name.empty()) throw std::invalid_argument("recipe name required (see --list)");
  const RunConfig cfg = occluded_benchmark_config(load_config(o), steps);
  RecipeOptions opts;
  if (!seeds.empty()) opts.seeds = parse_seeds(seeds);
  else if (o.seed) opts.seeds = {*o.seed};
  opts.parallel = parallel;
  opts.progress = [](const std::string& line) { std::cerr << line << "\n"; };
  const RecipeReport report = run_recipe(name, cfg, o.out_dir, opts);
  std::cout << report.ablation.table();
  for (const PropertyCheck& c : report.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
  }
  std::cout << "report: " << report.dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-guided feature disentangling for occluded re-identification"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o, ablate_o, export_o, recipe_o;
  std::string train_data, eval_data, eval_ckpt, eval_kp, export_data, export_ckpt, export_kp;
  std::string ablate_param, ablate_values, ablate_seeds, recipe_name, recipe_seeds;
  int recipe_steps = 700;
  std::vector<std::string> export_ids;
  int export_count = 4;
  bool ablate_parallel = false, recipe_parallel = false, recipe_list = false;

  auto* gen = app.add_subcommand("gen-data", "render a synthetic occluded re-id dataset");
  add_common(gen, gen_o);

  auto* tr = app.add_subcommand("train", "train a model, then evaluate it");
  add_common(tr, train_o);
  tr->add_option("--data", train_data, "dataset directory from gen-data")->check(CLI::ExistingDirectory);

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (CMC and mAP)");
  add_common(ev, eval_o);
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval_data, "dataset directory")->check(CLI::ExistingDirectory);
  ev->add_option("--keypoints", eval_kp, "external keypoint file")->check(CLI::ExistingFile);

  auto* ab = app.add_subcommand("ablate", "sweep one parameter and tabulate retrieval");
  add_common(ab, ablate_o);
  ab->add_option("--param", ablate_param,
                 "num_views | decoder_layers | gamma | pose_noise | modules")->required();
  ab->add_option("--values", ablate_values, "comma-separated values");
  ab->add_option("--seeds", ablate_seeds, "comma-separated seeds (default: --seed)");
  ab->add_flag("--parallel", ablate_parallel, "run sweep points on separate threads");

  auto* ex = app.add_subcommand("export-attention", "write per-view and fused attention overlays");
  add_common(ex, export_o);
  ex->add_option("--checkpoint", export_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  ex->add_option("--data", export_data, "dataset directory")->check(CLI::ExistingDirectory);
  ex->add_option("--keypoints", export_kp, "external keypoint file")->check(CLI::ExistingFile);
  ex->add_option("--image-id", export_ids, "image id to export (repeatable)");
  ex->add_option("--count", export_count, "number of query images when no id is given")
      ->check(CLI::PositiveNumber);

  auto* rr = app.add_subcommand("run-recipe", "run a named experiment recipe");
  add_common(rr, recipe_o);
  rr->add_option("name", recipe_name, "recipe name");
  rr->add_option("--seeds", recipe_seeds, "comma-separated seeds");
  rr->add_option("--steps", recipe_steps, "training steps per sweep point")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  rr->add_flag("--parallel", recipe_parallel, "run sweep points on separate threads");
  rr->add_flag("--list", recipe_list, "list recipes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_o);
    if (tr->parsed()) return cmd_train(train_o, train_data);
    if (ev->parsed()) return cmd_eval(eval_o, eval_ckpt, eval_data, eval_kp);
    if (ab->parsed()) {
      return cmd_ablate(ablate_o, ablate_param, ablate_values, ablate_seeds, ablate_parallel);
    }
    if (ex->parsed()) {
      return cmd_export_attention(export_o, export_ckpt, export_data, export_kp, export_ids,
                                  export_count);
    }
    if (rr->parsed()) return cmd_run_recipe(recipe_o, recipe_name, recipe_seeds, recipe_steps,
                                            recipe_parallel, recipe_list);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

#include "pfd/ablation.hpp"

#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "pfd/pipeline.hpp"

namespace pfd {

SweepParameter sweep_parameter_from_string(const std::string& name) {
  if (name == "num_views" || name == "N_v") return SweepParameter::kNumViews;
  if (name == "decoder_layers") return SweepParameter::kDecoderLayers;
  if (name == "gamma") return SweepParameter::kGamma;
  if (name == "pose_noise" || name == "sigma") return SweepParameter::kPoseNoise;
  if (name == "modules") return SweepParameter::kModules;
  throw std::invalid_argument("unknown sweep parameter: " + name +
                              " (expected num_views, decoder_layers, gamma, pose_noise, modules)");
}

std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::kNumViews: return "num_views";
    case SweepParameter::kDecoderLayers: return "decoder_layers";
    case SweepParameter::kGamma: return "gamma";
    case SweepParameter::kPoseNoise: return "pose_noise";
    case SweepParameter::kModules: return "modules";
  }
  return "modules";
}

const std::vector<ModuleToggles>& module_toggle_rows() {
  static const std::vector<ModuleToggles> rows = {
      {false, false, false}, {true, false, false}, {false, true, false},
      {false, true, true},   {true, true, false},  {true, true, true}};
  return rows;
}

RunConfig apply_toggles(const RunConfig& base, const ModuleToggles& t) {
  RunConfig cfg = base;
  cfg.model.use_pfa = t.pfa;
  cfg.model.use_pvm = t.pvm;
  cfg.model.use_push = t.push;
  return cfg;
}

RunConfig apply_sweep(const RunConfig& base, SweepParameter p, double value) {
  RunConfig cfg = base;
  auto as_count = [&](const char* what) {
    if (value < 0.0 || value != static_cast<double>(static_cast<int>(value))) {
      throw std::invalid_argument(std::string(what) + " must be a non-negative integer");
    }
    return static_cast<int>(value);
  };
  switch (p) {
    case SweepParameter::kNumViews:
      cfg.model.decoder.views = as_count("num_views");
      if (cfg.model.decoder.views < 1) throw std::invalid_argument("num_views must be >= 1");
      break;
    case SweepParameter::kDecoderLayers:
      cfg.model.decoder.layers = as_count("decoder_layers");
      break;
    case SweepParameter::kGamma:
      cfg.model.pose.gamma = value;
      break;
    case SweepParameter::kPoseNoise:
      if (value < 0.0) throw std::invalid_argument("pose_noise must be >= 0");
      cfg.train.pose_noise = value;
      break;
    case SweepParameter::kModules:
      throw std::invalid_argument("module toggles are applied with apply_toggles");
  }
  cfg.validate();
  return cfg;
}

EvalResult train_and_evaluate(const RunConfig& cfg) {
  const DatasetManifest data = build_dataset(cfg.data);
  const TrainResult trained = train(cfg, data);
  return evaluate(*trained.model, cfg, data);
}

namespace {

std::string format_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string toggle_label(const ModuleToggles& t) {
  std::string s;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += "+";
    s += name;
  };
  add(t.pfa, "PFA");
  add(t.pvm, "PVM");
  add(t.push, "Lp");
  return s.empty() ? "baseline" : s;
}

}  // namespace

AblationReport ablate(const RunConfig& base, SweepParameter p, const std::vector<double>& values,
                      const AblationOptions& opts) {
  if (opts.seeds.empty()) throw std::invalid_argument("ablate: need at least one seed");
  AblationReport report;
  report.parameter = p;
  std::vector<RunConfig> configs;
  if (p == SweepParameter::kModules) {
    int index = 1;
    for (const ModuleToggles& t : module_toggle_rows()) {
      SweepPoint pt;
      pt.label = std::to_string(index) + " " + toggle_label(t);
      pt.value = index++;
      pt.toggles = t;
      report.points.push_back(pt);
      configs.push_back(apply_toggles(base, t));
    }
  } else {
    if (values.empty()) throw std::invalid_argument("ablate: empty value list");
    for (double v : values) {
      SweepPoint pt;
      pt.label = format_value(v);
      pt.value = v;
      pt.toggles = {base.model.use_pfa, base.model.use_pvm, base.model.use_push};
      report.points.push_back(pt);
      configs.push_back(apply_sweep(base, p, v));
    }
  }

  struct Job {
    std::size_t point;
    std::size_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    report.points[i].seeds = opts.seeds;
    report.points[i].per_seed.resize(opts.seeds.size());
    for (std::size_t s = 0; s < opts.seeds.size(); ++s) jobs.push_back({i, s});
  }

  std::mutex mu;
  auto run_job = [&](const Job& job) {
    RunConfig cfg = configs[job.point];
    const std::uint64_t seed = opts.seeds[job.seed];
    cfg.seed = seed;
    cfg.data.seed = base.data.seed + seed;
    EvalResult r = train_and_evaluate(cfg);
    std::lock_guard<std::mutex> lock(mu);
    if (opts.progress) {
      char line[160];
      std::snprintf(line, sizeof(line), "%s=%s seed=%llu R-1=%.1f mAP=%.1f", to_string(p).c_str(),
                    report.points[job.point].label.c_str(), static_cast<unsigned long long>(seed),
                    100.0 * r.rank(1), 100.0 * r.mean_ap);
      opts.progress(line);
    }
    report.points[job.point].per_seed[job.seed] = std::move(r);
  };

  if (opts.parallel && jobs.size() > 1) {
    const std::size_t workers =
        std::min<std::size_t>(jobs.size(), std::max(1u, std::thread::hardware_concurrency()));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
          try {
            run_job(jobs[j]);
          } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  } else {
    for (const Job& job : jobs) run_job(job);
  }

  for (SweepPoint& pt : report.points) {
    const double n = static_cast<double>(pt.per_seed.size());
    for (const EvalResult& r : pt.per_seed) {
      pt.rank1 += r.rank(1) / n;
      pt.rank5 += r.rank(5) / n;
      pt.rank10 += r.rank(10) / n;
      pt.mean_ap += r.mean_ap / n;
    }
  }
  return report;
}

std::string AblationReport::table() const {
  std::ostringstream os;
  char line[200];
  if (parameter == SweepParameter::kModules) {
    std::snprintf(line, sizeof(line), "%5s %4s %4s %4s %6s %6s %6s %6s\n", "Index", "PFA", "PVM",
                  "Lp", "R-1", "R-5", "R-10", "mAP");
    os << line;
    for (const SweepPoint& pt : points) {
      std::snprintf(line, sizeof(line), "%5d %4s %4s %4s %6.1f %6.1f %6.1f %6.1f\n",
                    static_cast<int>(pt.value), pt.toggles.pfa ? "x" : "", pt.toggles.pvm ? "x" : "",
                    pt.toggles.push ? "x" : "", 100.0 * pt.rank1, 100.0 * pt.rank5,
                    100.0 * pt.rank10, 100.0 * pt.mean_ap);
      os << line;
    }
  } else {
    std::snprintf(line, sizeof(line), "%14s %6s %6s %6s %6s\n", to_string(parameter).c_str(), "R-1",
                  "R-5", "R-10", "mAP");
    os << line;
    for (const SweepPoint& pt : points) {
      std::snprintf(line, sizeof(line), "%14s %6.1f %6.1f %6.1f %6.1f\n", pt.label.c_str(),
                    100.0 * pt.rank1, 100.0 * pt.rank5, 100.0 * pt.rank10, 100.0 * pt.mean_ap);
      os << line;
    }
  }
  return os.str();
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const SweepPoint& pt : points) {
    nlohmann::json seeds = nlohmann::json::array();
    for (std::size_t s = 0; s < pt.per_seed.size(); ++s) {
      seeds.push_back({{"seed", pt.seeds[s]},
                       {"cmc", pt.per_seed[s].cmc},
                       {"mAP", pt.per_seed[s].mean_ap}});
    }
    pts.push_back({{"label", pt.label},
                   {"value", pt.value},
                   {"pfa", pt.toggles.pfa},
                   {"pvm", pt.toggles.pvm},
                   {"push", pt.toggles.push},
                   {"rank1", pt.rank1},
                   {"rank5", pt.rank5},
                   {"rank10", pt.rank10},
                   {"mAP", pt.mean_ap},
                   {"per_seed", seeds}});
  }
  return {{"parameter", to_string(parameter)}, {"points", pts}};
}

}  // namespace pfd

#ifndef PFD_ABLATION_HPP_
#define PFD_ABLATION_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pfd/config.hpp"
#include "pfd/eval.hpp"

namespace pfd {

// Sweepable knobs. "modules" ignores the value list and runs the six
// PFA/PVM/push-loss combinations in their canonical index order.
enum class SweepParameter { kNumViews, kDecoderLayers, kGamma, kPoseNoise, kModules };

SweepParameter sweep_parameter_from_string(const std::string& name);
std::string to_string(SweepParameter p);

struct ModuleToggles {
  bool pfa = false;
  bool pvm = false;
  bool push = false;
};

// Index 1..6: none, PFA, PVM, PVM+push, PFA+PVM, PFA+PVM+push.
const std::vector<ModuleToggles>& module_toggle_rows();

struct SweepPoint {
  std::string label;
  double value = 0.0;
  ModuleToggles toggles;
  std::vector<std::uint64_t> seeds;
  std::vector<EvalResult> per_seed;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank10 = 0.0;
  double mean_ap = 0.0;
};

struct AblationReport {
  SweepParameter parameter = SweepParameter::kModules;
  std::vector<SweepPoint> points;

  // Plain-text table: one row per point, R-1/R-5/R-10/mAP averaged over seeds.
  std::string table() const;
  nlohmann::json to_json() const;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds = {1};
  // Run independent points on separate threads.
  bool parallel = false;
  std::function<void(const std::string&)> progress;
};

// Returns a copy of `base` with one sweep value applied.
RunConfig apply_sweep(const RunConfig& base, SweepParameter p, double value);
RunConfig apply_toggles(const RunConfig& base, const ModuleToggles& t);

// Trains and evaluates one configuration per value (and per seed). Each seed
// also reseeds the synthetic dataset so variants within a seed share data.
// Throws std::invalid_argument for an empty value list (except kModules).
AblationReport ablate(const RunConfig& base, SweepParameter p, const std::vector<double>& values,
                      const AblationOptions& opts = {});

// Trains and evaluates a single configuration.
EvalResult train_and_evaluate(const RunConfig& cfg);

}  // namespace pfd

#endif  // PFD_ABLATION_HPP_

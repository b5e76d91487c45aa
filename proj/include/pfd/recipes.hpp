#ifndef PFD_RECIPES_HPP_
#define PFD_RECIPES_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pfd/ablation.hpp"

namespace pfd {

struct PropertyCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

// A named sweep with the directional properties its report is checked against.
struct ExperimentRecipe {
  std::string name;
  std::string description;
  SweepParameter parameter = SweepParameter::kModules;
  std::vector<double> values;
  std::vector<std::string> expected_properties;
  std::function<std::vector<PropertyCheck>(const AblationReport&)> check;
};

const std::vector<ExperimentRecipe>& recipe_registry();

// Throws std::invalid_argument for an unknown name.
const ExperimentRecipe& find_recipe(const std::string& name);

// Held-out evaluation split used by the recipes: unseen identities, queries
// carrying a distractor occluder over 40% of the image.
RunConfig occluded_benchmark_config(RunConfig base, int steps = 1000);

// Full model >= every single-module-removed variant and >= the encoder-only
// row (seed-averaged mAP), and at most `max_inversions` decreasing adjacent
// pairs along rows 1..6 within each seed.
std::vector<PropertyCheck> module_toggle_checks(const AblationReport& report, int max_inversions = 1);

struct RecipeOptions {
  std::vector<std::uint64_t> seeds = {1};
  bool parallel = false;
  std::function<void(const std::string&)> progress;
};

struct RecipeReport {
  std::filesystem::path dir;
  AblationReport ablation;
  std::vector<PropertyCheck> checks;
};

// Runs the sweep and writes config.json, report.json, table.txt,
// properties.txt and plot.svg under out_dir/recipes/<name>/.
RecipeReport run_recipe(const std::string& name, const RunConfig& base,
                        const std::filesystem::path& out_dir, const RecipeOptions& opts = {});

// Line plot of Rank-1 and mAP against the swept value (bars for module rows).
std::string render_svg_plot(const AblationReport& report, const std::string& title);

}  // namespace pfd

#endif  // PFD_RECIPES_HPP_

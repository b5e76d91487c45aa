#ifndef PFD_POSE_HPP_
#define PFD_POSE_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfd/autograd.hpp"
#include "pfd/nn.hpp"
#include "pfd/synthgen.hpp"

namespace pfd {

enum class PoseSource { kOracle, kFile };

// M keypoint heatmaps at a quarter of the image resolution. Row i of `maps`
// is heatmap i flattened row-major over (map_height, map_width).
struct HeatmapSet {
  int map_height = 0;
  int map_width = 0;
  Matrix maps;
  std::vector<double> confidences;
  std::vector<int> labels;
  double gamma = 0.2;
  PoseSource source = PoseSource::kOracle;

  int size() const { return static_cast<int>(confidences.size()); }
};

struct PoseConfig {
  double gamma = 0.2;
  // Gaussian blob scale in heatmap cells.
  double blob_sigma = 1.5;
  // Half-size, in image pixels, of the square used to measure occluder coverage.
  double neighborhood = 3.0;
};

struct KeypointTruth {
  std::vector<Keypoint> keypoints;
  std::vector<Box> occluders;
};

// A single estimator output: normalized position plus confidence.
struct KeypointObservation {
  double x = 0.0;
  double y = 0.0;
  double confidence = 0.0;
};

struct KeypointFileRecord {
  std::string image_id;
  std::vector<KeypointObservation> points;
};

// l_i = 1 iff c_i >= gamma.
std::vector<int> label_heatmaps(std::span<const double> confidences, double gamma);

// Fraction of the keypoint's pixel neighborhood covered by occluders, in [0, 1].
double occluder_coverage(const Keypoint& kp, const std::vector<Box>& occluders, int image_height,
                         int image_width, double neighborhood);

// Oracle confidence: visible points land in [0.25, 1], occluded ones in [0, 0.15],
// both decaying as exp(-4 * coverage).
double oracle_confidence(bool visible, double coverage);

// Oracle estimator output for every ground-truth keypoint.
std::vector<KeypointObservation> oracle_observations(const KeypointTruth& truth, int image_height,
                                                     int image_width, const PoseConfig& config);

HeatmapSet synth_heatmaps(const KeypointTruth& truth, int image_height, int image_width,
                          const PoseConfig& config);

// Renders heatmaps whose blob amplitude equals each observation's confidence.
HeatmapSet heatmaps_from_observations(std::span<const KeypointObservation> points,
                                      int image_height, int image_width, const PoseConfig& config,
                                      PoseSource source);

HeatmapSet add_pose_noise(const HeatmapSet& hs, double sigma, Rng& rng);

// Plain-text keypoint file, one record per line:
//   <image_id> <M> <x_1> <y_1> <c_1> ... <x_M> <y_M> <c_M>
// Blank lines and lines starting with '#' are ignored. Coordinates and
// confidences lie in [0, 1].
void write_keypoint_file(const std::filesystem::path& path,
                         std::span<const KeypointFileRecord> records);
std::vector<KeypointFileRecord> read_keypoint_file(const std::filesystem::path& path,
                                                   int expected_keypoints);

struct LoadedPose {
  std::string image_id;
  HeatmapSet heatmaps;
};

std::vector<LoadedPose> load_external_keypoints(const std::filesystem::path& path,
                                                int expected_keypoints, int image_height,
                                                int image_width, const PoseConfig& config);

}  // namespace pfd

#endif  // PFD_POSE_HPP_

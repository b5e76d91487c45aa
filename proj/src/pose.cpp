#include "pfd/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

void check_dims(int image_height, int image_width) {
  if (image_height < 4 || image_width < 4 || image_height % 4 != 0 || image_width % 4 != 0) {
    throw std::invalid_argument("heatmaps need image dimensions divisible by 4");
  }
}

}  // namespace

std::vector<int> label_heatmaps(std::span<const double> confidences, double gamma) {
  std::vector<int> labels;
  labels.reserve(confidences.size());
  for (double c : confidences) labels.push_back(c < gamma ? 0 : 1);
  return labels;
}

double occluder_coverage(const Keypoint& kp, const std::vector<Box>& occluders, int image_height,
                         int image_width, double neighborhood) {
  if (occluders.empty()) return 0.0;
  constexpr int kSteps = 7;
  int covered = 0;
  for (int i = 0; i < kSteps; ++i) {
    for (int j = 0; j < kSteps; ++j) {
      const double dx = neighborhood * (2.0 * (j + 0.5) / kSteps - 1.0);
      const double dy = neighborhood * (2.0 * (i + 0.5) / kSteps - 1.0);
      const double x = kp.x + dx / image_width;
      const double y = kp.y + dy / image_height;
      for (const Box& b : occluders) {
        if (b.contains(x, y)) {
          ++covered;
          break;
        }
      }
    }
  }
  return static_cast<double>(covered) / (kSteps * kSteps);
}

double oracle_confidence(bool visible, double coverage) {
  const double decay = std::exp(-4.0 * std::clamp(coverage, 0.0, 1.0));
  return visible ? 0.25 + 0.75 * decay : 0.15 * decay;
}

HeatmapSet heatmaps_from_observations(std::span<const KeypointObservation> points,
                                      int image_height, int image_width, const PoseConfig& config,
                                      PoseSource source) {
  check_dims(image_height, image_width);
  HeatmapSet hs;
  hs.map_height = image_height / 4;
  hs.map_width = image_width / 4;
  hs.gamma = config.gamma;
  hs.source = source;
  const int m = static_cast<int>(points.size());
  hs.maps = Matrix::Zero(m, hs.map_height * hs.map_width);
  const double inv_two_var = 1.0 / (2.0 * config.blob_sigma * config.blob_sigma);
  for (int i = 0; i < m; ++i) {
    const auto& p = points[static_cast<std::size_t>(i)];
    const double c = std::clamp(p.confidence, 0.0, 1.0);
    const int cx = std::clamp(static_cast<int>(std::floor(p.x * hs.map_width)), 0, hs.map_width - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(p.y * hs.map_height)), 0, hs.map_height - 1);
    for (int y = 0; y < hs.map_height; ++y) {
      for (int x = 0; x < hs.map_width; ++x) {
        const double d2 = static_cast<double>((x - cx) * (x - cx) + (y - cy) * (y - cy));
        hs.maps(i, y * hs.map_width + x) = c * std::exp(-d2 * inv_two_var);
      }
    }
    hs.confidences.push_back(c);
  }
  hs.labels = label_heatmaps(hs.confidences, config.gamma);
  return hs;
}

std::vector<KeypointObservation> oracle_observations(const KeypointTruth& truth, int image_height,
                                                     int image_width, const PoseConfig& config) {
  std::vector<KeypointObservation> obs;
  obs.reserve(truth.keypoints.size());
  for (const Keypoint& kp : truth.keypoints) {
    const double coverage =
        occluder_coverage(kp, truth.occluders, image_height, image_width, config.neighborhood);
    obs.push_back({kp.x, kp.y, oracle_confidence(kp.visible, coverage)});
  }
  return obs;
}

HeatmapSet synth_heatmaps(const KeypointTruth& truth, int image_height, int image_width,
                          const PoseConfig& config) {
  return heatmaps_from_observations(oracle_observations(truth, image_height, image_width, config),
                                    image_height, image_width, config, PoseSource::kOracle);
}

HeatmapSet add_pose_noise(const HeatmapSet& hs, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("add_pose_noise: sigma must be >= 0");
  if (sigma == 0.0) return hs;
  HeatmapSet out = hs;
  std::normal_distribution<double> noise(0.0, sigma);
  for (Eigen::Index i = 0; i < out.maps.size(); ++i) {
    out.maps.data()[i] = std::max(0.0, out.maps.data()[i] + noise(rng));
  }
  for (int i = 0; i < out.size(); ++i) {
    out.confidences[static_cast<std::size_t>(i)] = std::min(1.0, out.maps.row(i).maxCoeff());
  }
  out.labels = label_heatmaps(out.confidences, out.gamma);
  return out;
}

void write_keypoint_file(const std::filesystem::path& path,
                         std::span<const KeypointFileRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write keypoint file: " + path.string());
  out << "# image_id M x1 y1 c1 ... xM yM cM (normalized coordinates)\n";
  out << std::setprecision(17);
  for (const auto& r : records) {
    out << r.image_id << ' ' << r.points.size();
    for (const auto& p : r.points) out << ' ' << p.x << ' ' << p.y << ' ' << p.confidence;
    out << '\n';
  }
}

std::vector<KeypointFileRecord> read_keypoint_file(const std::filesystem::path& path,
                                                   int expected_keypoints) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read keypoint file: " + path.string());
  std::vector<KeypointFileRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto fail = [&](const std::string& what) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    std::istringstream fields(line);
    KeypointFileRecord rec;
    int m = 0;
    if (!(fields >> rec.image_id >> m)) fail("expected '<image_id> <M>'");
    if (m != expected_keypoints) {
      fail("keypoint count " + std::to_string(m) + " != expected " +
           std::to_string(expected_keypoints));
    }
    for (int i = 0; i < m; ++i) {
      KeypointObservation p;
      if (!(fields >> p.x >> p.y >> p.confidence)) fail("truncated keypoint triplets");
      const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
      if (!in_unit(p.x) || !in_unit(p.y) || !in_unit(p.confidence)) {
        fail("keypoint values must lie in [0, 1]");
      }
      rec.points.push_back(p);
    }
    std::string extra;
    if (fields >> extra) fail("trailing data after " + std::to_string(m) + " triplets");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<LoadedPose> load_external_keypoints(const std::filesystem::path& path,
                                                int expected_keypoints, int image_height,
                                                int image_width, const PoseConfig& config) {
  std::vector<LoadedPose> out;
  for (const auto& rec : read_keypoint_file(path, expected_keypoints)) {
    out.push_back({rec.image_id, heatmaps_from_observations(rec.points, image_height, image_width,
                                                            config, PoseSource::kFile)});
  }
  return out;
}

}  // namespace pfd

#ifndef PFD_SYNTHGEN_HPP_
#define PFD_SYNTHGEN_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pfd/image.hpp"
#include "pfd/nn.hpp"

namespace pfd {

// Procedural occluded-person dataset with exact keypoint ground truth.
//
// Each identity is a stick figure built from a 17-point COCO-style template,
// jittered per identity, with one color per body part. Samples add per-sample
// pose jitter, a deterministic per-camera color transform and optional
// rectangular occluders. All coordinates are normalized to [0, 1]^2 with x
// along the width and y along the height.

using Rgb = std::array<double, 3>;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct IdentitySpec {
  int identity_id = 0;
  std::vector<Rgb> part_colors;
  std::vector<Point2> part_geometry;
  bool operator==(const IdentitySpec&) const = default;
};

// Axis-aligned rectangle in normalized coordinates, half-open [x0, x1) x [y0, y1).
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  double area() const { return (x1 - x0) * (y1 - y0); }
  bool operator==(const Box&) const = default;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = true;
  bool operator==(const Keypoint&) const = default;
};

enum class OccluderStyle { kUniform, kDistractor };

struct OcclusionConfig {
  // Occluder area as a fraction of the image, in [0, 1). 0 disables random occluders.
  double fraction = 0.0;
  // Chance that a sample receives a random occluder at all.
  double probability = 1.0;
  OccluderStyle style = OccluderStyle::kUniform;
  // Extra occluders placed verbatim (normalized coordinates).
  std::vector<Box> boxes;
};

struct RenderConfig {
  int height = 64;
  int width = 32;
  int channels = 3;
  int num_cameras = 4;
  // Per-sample global translation range and per-keypoint jitter, normalized units.
  double shift_jitter = 0.03;
  double point_jitter = 0.01;
};

struct SampleRecord {
  Image image;
  int identity_id = 0;
  int camera_id = 0;
  std::vector<Keypoint> keypoint_truth;
  std::vector<Box> occluder_boxes;
};

IdentitySpec generate_identity(std::uint64_t seed, int identity_id, int num_keypoints);

// Throws std::invalid_argument for an out-of-range camera or occlusion fraction.
SampleRecord render_sample(const IdentitySpec& spec, int camera_id, const OcclusionConfig& occlusion,
                           const RenderConfig& render, Rng& rng);

// Per-camera affine color transform applied to a pixel.
Rgb camera_transform(int camera_id, const Rgb& color);

enum class Split { kTrain, kQuery, kGallery };
std::string to_string(Split split);
Split split_from_string(const std::string& s);

struct DatasetConfig {
  int num_identities = 8;
  int samples_per_identity = 16;
  // Identities [0, num_train_identities) form the training split; the rest are
  // divided into query and gallery records.
  int num_train_identities = 8;
  int queries_per_identity = 2;
  int num_keypoints = 17;
  std::uint64_t seed = 7;
  RenderConfig render;
  OcclusionConfig train_occlusion;
  OcclusionConfig query_occlusion;
  OcclusionConfig gallery_occlusion;
};

struct ManifestEntry {
  std::string image_id;
  Split split = Split::kTrain;
  SampleRecord record;
};

struct DatasetManifest {
  DatasetConfig config;
  std::vector<ManifestEntry> entries;

  std::vector<std::size_t> indices(Split split) const;
};

DatasetManifest build_dataset(const DatasetConfig& config);

// Directory layout: manifest.json plus images/<image_id>.png.
void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest load_dataset(const std::filesystem::path& dir);

// COCO skeleton edges restricted to keypoints below num_keypoints.
std::vector<std::array<int, 2>> skeleton_edges(int num_keypoints);

}  // namespace pfd

#endif  // PFD_SYNTHGEN_HPP_

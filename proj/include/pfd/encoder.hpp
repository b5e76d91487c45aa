#ifndef PFD_ENCODER_HPP_
#define PFD_ENCODER_HPP_

#include <utility>
#include <vector>

#include "pfd/autograd.hpp"
#include "pfd/image.hpp"
#include "pfd/nn.hpp"

namespace pfd {

// Sliding-window patch geometry. `stride` < `patch` gives overlapping patches.
struct PatchConfig {
  int height = 64;
  int width = 32;
  int channels = 3;
  int patch = 8;
  int stride = 8;
  int dim = 64;

  // Throws std::invalid_argument unless 1 <= stride <= patch <= min(height, width).
  void validate() const;
  int grid_rows() const { return (height + stride - patch) / stride; }
  int grid_cols() const { return (width + stride - patch) / stride; }
  int num_patches() const { return grid_rows() * grid_cols(); }
  int patch_length() const { return patch * patch * channels; }
};

// N = floor((H + S - P) / S) * floor((W + S - P) / S).
int patch_count(int height, int width, int patch, int stride);

// N x (P*P*C) matrix of flattened patches, windows enumerated row-major;
// each patch flattens as (row, col, channel).
Matrix extract_patches(const Image& image, const PatchConfig& cfg);

// Contiguous [begin, begin + count) ranges splitting n tokens into k groups of
// n / k, the last group absorbing the remainder.
std::vector<std::pair<int, int>> group_ranges(int n, int k);

struct EncoderConfig {
  PatchConfig patch;
  int heads = 4;
  int layers = 4;
  int num_cameras = 4;
  double camera_weight = 1.0;
  int groups = 17;
};

struct EncoderOutput {
  ag::Var f_en;    // (N+1) x D
  ag::Var f_gb;    // 1 x D
  ag::Var f_part;  // N x D
  ag::Var f_gp;    // K x D
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  ag::Var embed_patches(const Image& image) const;
  // concat(x_class, E) + P_E + lambda_cm * C_id[camera].
  ag::Var assemble_input(const ag::Var& embeddings, int camera_id) const;
  // Runs the m-layer stack (followed by a final norm when m > 0); the empty
  // stack is the identity. Returns f_en.
  ag::Var encode(const ag::Var& input) const;
  // Splits f_part in order into K groups, prepends f_gb to each, runs the
  // shared layer and reads the output at the prepended position.
  ag::Var group_part_features(const ag::Var& f_part, const ag::Var& f_gb, int groups) const;

  EncoderOutput forward(const Image& image, int camera_id) const;

  ag::Var patch_weight() const { return projection_.weight; }
  ag::Var class_token() const { return class_token_; }
  ag::Var positions() const { return positions_; }
  ag::Var camera_embedding(int camera_id) const;

 private:
  EncoderConfig cfg_;
  Linear projection_;
  ag::Var class_token_;
  ag::Var positions_;
  std::vector<ag::Var> cameras_;
  std::vector<TransformerBlock> blocks_;
  LayerNorm final_norm_;
  TransformerBlock group_block_;
  LayerNorm group_norm_;
};

// Throws std::runtime_error naming `what` if any entry is non-finite.
void require_finite(const Matrix& m, const char* what);

}  // namespace pfd

#endif  // PFD_ENCODER_HPP_

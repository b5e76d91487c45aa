#ifndef PFD_MODEL_HPP_
#define PFD_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <vector>

#include "pfd/config.hpp"
#include "pfd/decoder.hpp"
#include "pfd/encoder.hpp"
#include "pfd/losses.hpp"
#include "pfd/pfa.hpp"
#include "pfd/pvm.hpp"

namespace pfd {

// Everything one image produces on the way to its losses and descriptor.
struct SampleForward {
  EncoderOutput encoder;
  ag::Var aggregated;          // S (f_gp itself when PFA is disabled)
  std::vector<int> pfa_match;  // empty when PFA is disabled
  DecoderMemory memory;
  DecoderOutput decoder;
  MatchedViews matched;        // F_v (v itself when PVM is disabled)
  ag::Var high;                // F_h after the empty-set fallback
  ag::Var low;                 // F_l, undefined when empty
  std::vector<int> high_views;
  bool fallback = false;       // every keypoint was low-confidence
  ag::Var f_ph;
};

// Fixed-length retrieval feature [f_gb, f_ph, f_gp^1..K, f_h^1..L, zeros].
struct RetrievalDescriptor {
  RowVector values;
  std::vector<bool> valid_mask;  // N_v slots, true for real F_h rows
};

// Descriptor length D * (2 + K + N_v).
int descriptor_length(const ModelConfig& cfg);

class PfdModel {
 public:
  PfdModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  const HeatmapProjection& heatmap_projection() const { return projection_; }
  const ClassifierHeads& heads() const { return heads_; }

  SampleForward forward(const Image& image, int camera_id, const HeatmapSet& pose) const;

  // Forward pass without gradient tracking, packed into the descriptor layout.
  RetrievalDescriptor describe(const Image& image, int camera_id, const HeatmapSet& pose) const;
  RetrievalDescriptor pack_descriptor(const SampleForward& f) const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Encoder encoder_;
  HeatmapProjection projection_;
  Decoder decoder_;
  ClassifierHeads heads_;
};

struct BatchLosses {
  ag::Var encoder;
  ag::Var decoder;
  ag::Var push;
  ag::Var total;
};

// Builds every objective over a batch of forwards.
BatchLosses batch_losses(const PfdModel& model, std::span<const SampleForward> batch,
                         std::span<const int> labels, const LossConfig& cfg);

}  // namespace pfd

#endif  // PFD_MODEL_HPP_

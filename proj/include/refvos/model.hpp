#pragma once

#include <memory>

#include "refvos/datagen.hpp"
#include "refvos/heads.hpp"
#include "refvos/mta.hpp"
#include "refvos/mti.hpp"
#include "refvos/ref_encoders.hpp"

namespace refvos {

struct ClipInput {
  Tensor frames;         // [T,H,W,3] in [0,1]
  std::string modality;  // "text" or "audio"
  TextReference text;
  AudioReference audio;

  static ClipInput from(const data::ClipData& d);
};

// Full pipeline: reference encoding, fused backbone, MTA-initialized queries,
// frame-independent encoder/decoder, MTI, segmentation head. One code path
// for both modalities; only encode_reference branches.
class Model {
 public:
  explicit Model(const RunConfig& cfg);

  const RunConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return ps_; }
  const nn::ParamStore& params() const { return ps_; }

  Tensor encode_reference(const ClipInput& in) const;  // F_r [(L+1),C]

  struct Forward {
    Tensor fr;       // reference features
    Tensor ff;       // multi-modal tokens after MTA
    Tensor p;        // [T,N,C] frame queries
    Tensor p_prime;  // [T,N,C] after MTI encoder
    Tensor q_prime;  // [N,C] video queries
    std::vector<EncodedFrame> encs;
    Prediction pred;
  };
  Forward forward(const ClipInput& in) const;

  // Submodules (read access for tests and ablation wiring).
  const Backbone& backbone() const { return backbone_; }
  const EarlyFusion& fusion() const { return fusion_; }
  const ScaleProjector& projector() const { return projector_; }
  const MtaModule& mta() const { return mta_; }
  const VisualEncoder& encoder() const { return encoder_; }
  const VisualDecoder& decoder() const { return decoder_; }
  const MtiEncoder& mti_encoder() const { return mti_encoder_; }
  const MtiDecoder& mti_decoder() const { return mti_decoder_; }
  const SegHead& head() const { return head_; }
  const TextEncoder& text_encoder() const { return text_encoder_; }
  const AudioEncoder& audio_encoder() const { return audio_encoder_; }
  Tensor query_embed() const { return eq_; }
  Tensor time_embed() const { return et_; }

  // Per-frame fused multi-scale features for the whole clip.
  std::vector<MultiScaleFeatures> visual_features(const Tensor& frames, const Tensor& fr) const;

 private:
  RunConfig cfg_;
  nn::ParamStore ps_;
  TextEncoder text_encoder_;
  AudioEncoder audio_encoder_;
  Backbone backbone_;
  EarlyFusion fusion_;
  ScaleProjector projector_;
  MtaModule mta_;
  VisualEncoder encoder_;
  VisualDecoder decoder_;
  MtiEncoder mti_encoder_;
  MtiDecoder mti_decoder_;
  SegHead head_;
  Tensor eq_, et_;
};

// Supervision targets for the single referent of a clip; mask_small is the
// majority-downsampled mask at the mask-logit resolution (hm, wm).
ObjectTarget make_target(const std::vector<metrics::BinaryMask>& masks, int hm, int wm);

}  // namespace refvos

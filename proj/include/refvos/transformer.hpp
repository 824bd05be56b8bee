#pragma once

#include <array>
#include <vector>

#include "refvos/backbone.hpp"

namespace refvos {

// Per-frame encoder output: per-scale token sequences plus the pixel
// embedding map for the mask head (at the stride of scale 2).
struct EncodedFrame {
  std::array<Tensor, 4> tokens;  // [H_i*W_i, C]
  std::array<int, 4> h, w;
  Tensor pixel_map;  // [H2, W2, C]
};

class VisualEncoder {
 public:
  VisualEncoder() = default;
  VisualEncoder(nn::ParamStore& ps, const RunConfig& cfg);
  EncodedFrame encode(const MultiScaleFeatures& feats) const;

 private:
  std::vector<nn::SelfAttentionBlock> layers_;
  Tensor scale_emb_;  // [4, C]
  std::array<Tensor, 4> lat_w_, lat_b_;  // FPN lateral 1x1 convs (index 0 = scale2)
  Tensor out_w_, out_b_;                 // final 1x1 conv
};

class VisualDecoder {
 public:
  VisualDecoder() = default;
  VisualDecoder(nn::ParamStore& ps, const RunConfig& cfg);
  // queries: [N,C] -> [N,C]
  Tensor decode(const Tensor& queries, const EncodedFrame& enc) const;

 private:
  std::vector<nn::DecoderBlock> layers_;
};

// Frame-independent video pass: P[t] = decode(iq[t], encode(frames[t])).
std::pair<Tensor, std::vector<EncodedFrame>> run_video(const VisualEncoder& enc, const VisualDecoder& dec,
                                                       const Tensor& iq,
                                                       const std::vector<MultiScaleFeatures>& frames);

}  // namespace refvos

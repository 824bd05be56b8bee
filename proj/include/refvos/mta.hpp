#pragma once

#include <array>
#include <vector>

#include "refvos/backbone.hpp"

namespace refvos {

// Per scale: [T*H_i*W_i, C] token banks, frame-major, with sinusoidal spatial
// position plus learned scale and frame embeddings already added.
struct TemporalScaleBank {
  std::array<Tensor, 4> bank;
};

// Multi-scale temporal aggregation: chains one cross-attention block per
// scale (ascending 2..5), reference tokens as queries, bank as key/value.
class MtaModule {
 public:
  MtaModule() = default;
  MtaModule(nn::ParamStore& ps, const RunConfig& cfg);

  // frames: per-frame projected features, all sharing spatial extents.
  TemporalScaleBank temporal_concat(const std::vector<MultiScaleFeatures>& frames) const;

  // fr: [(L+1), C] reference features -> multi-modal tokens of the same shape.
  Tensor forward(const Tensor& fr, const TemporalScaleBank& banks) const;

 private:
  std::vector<std::array<nn::CrossAttentionBlock, 4>> blocks_;  // [num_blocks][scale]
  Tensor scale_emb_;  // [4, C]
  Tensor frame_emb_;  // [max_frames, C]
  int num_blocks_ = 1;
};

// queries[t,n] = ff[0] + eq[n] + et[t]; [T,N,C].
Tensor make_queries(const Tensor& ff, int t, int n, const Tensor& eq, const Tensor& et);

}  // namespace refvos

#pragma once

#include <vector>

#include "refvos/config.hpp"
#include "refvos/nn.hpp"

namespace refvos {

// Inter-frame object interaction: shifted-window self-attention along the
// temporal axis over per-frame query outputs P [T,N,C].
class MtiEncoder {
 public:
  MtiEncoder() = default;
  MtiEncoder(nn::ParamStore& ps, const RunConfig& cfg);
  Tensor encode(const Tensor& p) const;  // [T,N,C] -> [T,N,C]

 private:
  struct Block {
    nn::MultiHeadAttention attn;
    nn::FeedForward ffn;
    nn::LayerNorm ln1, ln2;
  };
  std::vector<Block> blocks_;
  int window_ = 2;
  bool cross_query_ = true;
};

// Video-wise query decoding: learned queries attend to all T*N interacted
// frame queries; temporal embeddings tag the keys by default.
class MtiDecoder {
 public:
  MtiDecoder() = default;
  MtiDecoder(nn::ParamStore& ps, const RunConfig& cfg);
  Tensor queries() const { return q_; }
  Tensor decode(const Tensor& p_prime, bool temporal_keys = true) const;  // -> [N,C]

 private:
  Tensor q_;             // [N,C], randomly initialized
  Tensor temporal_emb_;  // [max_frames, C]
  std::vector<nn::DecoderBlock> blocks_;
};

}  // namespace refvos

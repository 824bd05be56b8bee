#pragma once

#include <array>

#include "refvos/config.hpp"
#include "refvos/nn.hpp"

namespace refvos {

// Raw per-frame stage features at strides stem, 2*stem, 4*stem.
struct StageFeatures {
  Tensor s2, s3, s4;  // [H_i, W_i, c_i]
};

// Projected multi-scale features, channel dim = model_dim at every scale.
// scale[0..3] correspond to scales 2..5.
struct MultiScaleFeatures {
  std::array<Tensor, 4> scale;
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(nn::ParamStore& ps, const RunConfig& cfg);
  // frame: [H,W,3] with H,W divisible by stem_stride*8.
  StageFeatures extract(const Tensor& frame) const;
  int stem_stride() const { return stem_stride_; }

 private:
  struct Conv {
    Tensor w, b;
    nn::LayerNorm ln;
    int stride = 1;
  };
  Tensor apply(const Conv& c, const Tensor& x) const;
  int stem_stride_ = 4;
  std::vector<Conv> stem_;
  std::array<std::vector<Conv>, 3> stages_;
};

// Pixel-to-reference cross-attention with a zero-initialized output
// projection, so a fresh model starts as the identity on backbone features.
class EarlyFusion {
 public:
  EarlyFusion() = default;
  EarlyFusion(nn::ParamStore& ps, const RunConfig& cfg);
  StageFeatures fuse(const StageFeatures& feats, const Tensor& fr) const;

 private:
  struct StageAttn {
    Tensor wq, wk, wv, wo, bo;
  };
  Tensor fuse_one(const StageAttn& a, const Tensor& x, const Tensor& fr) const;
  std::array<StageAttn, 3> attn_;
};

// 1x1 projections for scales 2-4 plus a stride-2 3x3 conv on stage-4 features
// for scale 5.
class ScaleProjector {
 public:
  ScaleProjector() = default;
  ScaleProjector(nn::ParamStore& ps, const RunConfig& cfg);
  MultiScaleFeatures project(const StageFeatures& feats) const;

 private:
  Tensor w2_, b2_, w3_, b3_, w4_, b4_, w5_, b5_;
};

}  // namespace refvos

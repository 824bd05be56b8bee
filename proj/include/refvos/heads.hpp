#pragma once

#include <array>
#include <map>
#include <vector>

#include "refvos/transformer.hpp"

namespace refvos {

struct LossWeights {
  double cls = 2.0;
  double l1 = 5.0;
  double giou = 2.0;
  double dice = 5.0;
  double focal = 2.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  static LossWeights from(const RunConfig& cfg) {
    return {cfg.lambda_cls, cfg.lambda_l1,    cfg.lambda_giou,
            cfg.lambda_dice, cfg.lambda_focal, cfg.focal_alpha, cfg.focal_gamma};
  }
};

struct Prediction {
  Tensor class_logits;  // [N] video-level referred-ness scores
  Tensor boxes;         // [T,N,4] normalized (cx,cy,w,h) in [0,1]
  Tensor mask_logits;   // [T,N,Hm,Wm] at the pixel-map stride
};

struct FrameTarget {
  bool present = false;         // gt mask non-empty this frame
  std::array<double, 4> box{};  // normalized tight (cx,cy,w,h); valid when present
  Tensor mask;                  // [H,W] binary full resolution
  Tensor mask_small;            // [Hm,Wm] binary, matching-cost resolution
};

struct ObjectTarget {
  std::vector<FrameTarget> frames;  // length T
};

// class head on video queries, box/mask heads on fused per-frame queries.
class SegHead {
 public:
  SegHead() = default;
  SegHead(nn::ParamStore& ps, const RunConfig& cfg);
  Prediction forward(const Tensor& p_prime, const Tensor& q_prime,
                     const std::vector<EncodedFrame>& encs) const;

 private:
  nn::Linear class_head_;
  nn::Linear box1_, box2_, box3_;
  nn::Linear mask_embed_;
};

// Differentiable loss primitives. Boxes are [4] tensors (cx,cy,w,h).
Tensor giou(const Tensor& a, const Tensor& b);
Tensor box_iou(const Tensor& a, const Tensor& b);
Tensor focal_loss(const Tensor& logits, const Tensor& targets, double alpha = 0.25, double gamma = 2.0);
Tensor dice_loss(const Tensor& mask_logits, const Tensor& gt_mask);

// Minimum-cost injective assignment, rows (gt) to columns (queries), K <= N.
// Returns per-row column indices.
std::vector<int> hungarian(const std::vector<std::vector<double>>& cost);

// Matching cost per spec; evaluated without gradients.
std::vector<std::vector<double>> match_cost(const Prediction& pred, const std::vector<ObjectTarget>& gts,
                                            const LossWeights& w);
std::vector<int> match(const Prediction& pred, const std::vector<ObjectTarget>& gts, const LossWeights& w);

struct LossResult {
  Tensor total;                         // scalar
  std::map<std::string, double> terms;  // raw per-term means for logging
};

LossResult total_loss(const Prediction& pred, const std::vector<ObjectTarget>& gts,
                      const std::vector<int>& assignment, const LossWeights& w);

}  // namespace refvos

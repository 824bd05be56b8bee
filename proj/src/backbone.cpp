#include "refvos/backbone.hpp"

#include <cmath>

namespace refvos {

Backbone::Backbone(nn::ParamStore& ps, const RunConfig& cfg)
    : stem_stride_(cfg.stem_stride) {
  if (cfg.backbone_channels.size() != 3) throw ContractError("backbone.channels must list three stage widths");
  if (stem_stride_ != 1 && stem_stride_ != 2 && stem_stride_ != 4)
    throw ContractError("backbone.stem_stride must be 1, 2 or 4");
  const int c2 = cfg.backbone_channels[0], c3 = cfg.backbone_channels[1], c4 = cfg.backbone_channels[2];

  auto make_conv = [&](const std::string& name, int cin, int cout, int stride) {
    Conv c;
    c.w = ps.create(name + ".w", {3, 3, cin, cout}, nn::Init::XavierUniform);
    c.b = ps.create(name + ".b", {cout}, nn::Init::Zeros);
    c.ln = nn::LayerNorm(ps, name + ".ln", cout);
    c.stride = stride;
    return c;
  };

  if (stem_stride_ == 4) {
    stem_.push_back(make_conv("backbone.stem0", 3, c2, 2));
    stem_.push_back(make_conv("backbone.stem1", c2, c2, 2));
  } else {
    stem_.push_back(make_conv("backbone.stem0", 3, c2, stem_stride_));
  }
  const int widths[4] = {c2, c2, c3, c4};
  for (int s = 0; s < 3; ++s) {
    const int cin = widths[s], cout = widths[s + 1];
    const int entry_stride = s == 0 ? 1 : 2;
    auto& blocks = stages_[s];
    blocks.push_back(make_conv("backbone.stage" + std::to_string(s + 2) + ".conv0", cin, cout, entry_stride));
    for (int k = 1; k < cfg.convs_per_stage; ++k)
      blocks.push_back(make_conv("backbone.stage" + std::to_string(s + 2) + ".conv" + std::to_string(k), cout,
                                 cout, 1));
  }
}

Tensor Backbone::apply(const Conv& c, const Tensor& x) const {
  Tensor y = ops::add(ops::conv2d(x, c.w, c.stride, 1), c.b);
  return ops::relu(c.ln.forward(y));
}

StageFeatures Backbone::extract(const Tensor& frame) const {
  if (frame.rank() != 3 || frame.dim(2) != 3)
    throw InputError("extract_features: frame must be [H,W,3], got " + shape_str(frame.shape()));
  const int h = frame.dim(0), w = frame.dim(1);
  const int divisor = stem_stride_ * 8;
  if (h % divisor != 0 || w % divisor != 0)
    throw InputError("extract_features: extents " + shape_str(frame.shape()) + " not divisible by " +
                     std::to_string(divisor));
  Tensor x = frame;
  for (const auto& c : stem_) x = apply(c, x);
  StageFeatures out;
  for (const auto& c : stages_[0]) x = apply(c, x);
  out.s2 = x;
  for (const auto& c : stages_[1]) x = apply(c, x);
  out.s3 = x;
  for (const auto& c : stages_[2]) x = apply(c, x);
  out.s4 = x;
  return out;
}

EarlyFusion::EarlyFusion(nn::ParamStore& ps, const RunConfig& cfg) {
  if (cfg.backbone_channels.size() != 3) throw ContractError("backbone.channels must list three stage widths");
  for (int s = 0; s < 3; ++s) {
    const int c = cfg.backbone_channels[s];
    const std::string base = "fusion.stage" + std::to_string(s + 2);
    attn_[s].wq = ps.create(base + ".q.w", {c, c}, nn::Init::XavierUniform);
    attn_[s].wk = ps.create(base + ".k.w", {cfg.model_dim, c}, nn::Init::XavierUniform);
    attn_[s].wv = ps.create(base + ".v.w", {cfg.model_dim, c}, nn::Init::XavierUniform);
    attn_[s].wo = ps.create(base + ".out.w", {c, c}, nn::Init::Zeros);
    attn_[s].bo = ps.create(base + ".out.b", {c}, nn::Init::Zeros);
  }
}

Tensor EarlyFusion::fuse_one(const StageAttn& a, const Tensor& x, const Tensor& fr) const {
  const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor flat = ops::reshape(x, {h * w, c});
  Tensor q = ops::matmul(flat, a.wq);
  Tensor k = ops::matmul(fr, a.wk);
  Tensor v = ops::matmul(fr, a.wv);
  Tensor scores = ops::mul_scalar(ops::matmul(q, ops::permute(k, {1, 0})), 1.0 / std::sqrt(double(c)));
  Tensor upd = ops::matmul(ops::softmax(scores, 1), v);
  upd = ops::add(ops::matmul(upd, a.wo), a.bo);
  return ops::reshape(ops::add(flat, upd), {h, w, c});
}

StageFeatures EarlyFusion::fuse(const StageFeatures& feats, const Tensor& fr) const {
  StageFeatures out;
  out.s2 = fuse_one(attn_[0], feats.s2, fr);
  out.s3 = fuse_one(attn_[1], feats.s3, fr);
  out.s4 = fuse_one(attn_[2], feats.s4, fr);
  return out;
}

ScaleProjector::ScaleProjector(nn::ParamStore& ps, const RunConfig& cfg) {
  const int d = cfg.model_dim;
  const int c2 = cfg.backbone_channels[0], c3 = cfg.backbone_channels[1], c4 = cfg.backbone_channels[2];
  w2_ = ps.create("proj.scale2.w", {1, 1, c2, d}, nn::Init::XavierUniform);
  b2_ = ps.create("proj.scale2.b", {d}, nn::Init::Zeros);
  w3_ = ps.create("proj.scale3.w", {1, 1, c3, d}, nn::Init::XavierUniform);
  b3_ = ps.create("proj.scale3.b", {d}, nn::Init::Zeros);
  w4_ = ps.create("proj.scale4.w", {1, 1, c4, d}, nn::Init::XavierUniform);
  b4_ = ps.create("proj.scale4.b", {d}, nn::Init::Zeros);
  w5_ = ps.create("proj.scale5.w", {3, 3, c4, d}, nn::Init::XavierUniform);
  b5_ = ps.create("proj.scale5.b", {d}, nn::Init::Zeros);
}

MultiScaleFeatures ScaleProjector::project(const StageFeatures& feats) const {
  MultiScaleFeatures out;
  out.scale[0] = ops::add(ops::conv2d(feats.s2, w2_, 1, 0), b2_);
  out.scale[1] = ops::add(ops::conv2d(feats.s3, w3_, 1, 0), b3_);
  out.scale[2] = ops::add(ops::conv2d(feats.s4, w4_, 1, 0), b4_);
  out.scale[3] = ops::add(ops::conv2d(feats.s4, w5_, 2, 1), b5_);
  return out;
}

}  // namespace refvos

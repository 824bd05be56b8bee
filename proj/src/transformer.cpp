#include "refvos/transformer.hpp"

namespace refvos {

VisualEncoder::VisualEncoder(nn::ParamStore& ps, const RunConfig& cfg) {
  const int d = cfg.model_dim;
  for (int i = 0; i < cfg.enc_layers; ++i)
    layers_.emplace_back(ps, "enc.layer" + std::to_string(i), d, cfg.heads, cfg.ffn_dim);
  scale_emb_ = ps.create("enc.scale_emb", {4, d}, nn::Init::Normal02);
  for (int s = 0; s < 4; ++s) {
    lat_w_[s] = ps.create("enc.fpn.lat" + std::to_string(s + 2) + ".w", {1, 1, d, d}, nn::Init::XavierUniform);
    lat_b_[s] = ps.create("enc.fpn.lat" + std::to_string(s + 2) + ".b", {d}, nn::Init::Zeros);
  }
  out_w_ = ps.create("enc.fpn.out.w", {1, 1, d, d}, nn::Init::XavierUniform);
  out_b_ = ps.create("enc.fpn.out.b", {d}, nn::Init::Zeros);
}

EncodedFrame VisualEncoder::encode(const MultiScaleFeatures& feats) const {
  EncodedFrame out;
  const int c = feats.scale[0].dim(2);
  std::vector<Tensor> parts;
  parts.reserve(4);
  for (int s = 0; s < 4; ++s) {
    const int h = feats.scale[s].dim(0), w = feats.scale[s].dim(1);
    out.h[s] = h;
    out.w[s] = w;
    Tensor tok = ops::reshape(feats.scale[s], {h * w, c});
    tok = ops::add(tok, nn::sinusoidal_2d(h, w, c));
    tok = ops::add(tok, ops::slice(scale_emb_, 0, s, 1));
    parts.push_back(tok);
  }
  Tensor x = ops::concat(parts, 0);
  for (const auto& l : layers_) x = l.forward(x);

  int off = 0;
  for (int s = 0; s < 4; ++s) {
    const int n = out.h[s] * out.w[s];
    out.tokens[s] = ops::slice(x, 0, off, n);
    off += n;
  }

  // FPN top-down fusion into the pixel embedding map.
  auto grid = [&](int s) { return ops::reshape(out.tokens[s], {out.h[s], out.w[s], c}); };
  Tensor m = ops::add(ops::conv2d(grid(3), lat_w_[3], 1, 0), lat_b_[3]);
  for (int s = 2; s >= 0; --s) {
    Tensor up = ops::upsample_nearest(m, out.h[s], out.w[s]);
    Tensor lat = ops::add(ops::conv2d(grid(s), lat_w_[s], 1, 0), lat_b_[s]);
    m = ops::add(up, lat);
  }
  out.pixel_map = ops::add(ops::conv2d(m, out_w_, 1, 0), out_b_);
  return out;
}

VisualDecoder::VisualDecoder(nn::ParamStore& ps, const RunConfig& cfg) {
  for (int i = 0; i < cfg.dec_layers; ++i)
    layers_.emplace_back(ps, "dec.layer" + std::to_string(i), cfg.model_dim, cfg.heads, cfg.ffn_dim);
}

Tensor VisualDecoder::decode(const Tensor& queries, const EncodedFrame& enc) const {
  Tensor mem = ops::concat({enc.tokens[0], enc.tokens[1], enc.tokens[2], enc.tokens[3]}, 0);
  Tensor x = queries;
  for (const auto& l : layers_) x = l.forward(x, mem);
  return x;
}

std::pair<Tensor, std::vector<EncodedFrame>> run_video(const VisualEncoder& enc, const VisualDecoder& dec,
                                                       const Tensor& iq,
                                                       const std::vector<MultiScaleFeatures>& frames) {
  if (iq.rank() != 3) throw ContractError("run_video: queries must be [T,N,C], got " + shape_str(iq.shape()));
  const int t = iq.dim(0), n = iq.dim(1), c = iq.dim(2);
  if (t != static_cast<int>(frames.size()))
    throw ContractError("run_video: query frames " + std::to_string(t) + " vs feature frames " +
                        std::to_string(frames.size()));
  std::vector<EncodedFrame> encs;
  encs.reserve(t);
  std::vector<Tensor> rows;
  rows.reserve(t);
  for (int j = 0; j < t; ++j) {
    encs.push_back(enc.encode(frames[j]));
    Tensor q = ops::reshape(ops::slice(iq, 0, j, 1), {n, c});
    Tensor p = dec.decode(q, encs.back());
    rows.push_back(ops::reshape(p, {1, n, c}));
  }
  Tensor p_all = rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
  return {p_all, std::move(encs)};
}

}  // namespace refvos

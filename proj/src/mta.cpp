#include "refvos/mta.hpp"

namespace refvos {

MtaModule::MtaModule(nn::ParamStore& ps, const RunConfig& cfg) : num_blocks_(cfg.mta_num_blocks) {
  if (num_blocks_ < 1) throw ContractError("mta.num_blocks must be >= 1");
  const int d = cfg.model_dim;
  for (int r = 0; r < num_blocks_; ++r) {
    std::array<nn::CrossAttentionBlock, 4> row = {
        nn::CrossAttentionBlock(ps, "mta.rep" + std::to_string(r) + ".scale2", d, cfg.heads, cfg.ffn_dim),
        nn::CrossAttentionBlock(ps, "mta.rep" + std::to_string(r) + ".scale3", d, cfg.heads, cfg.ffn_dim),
        nn::CrossAttentionBlock(ps, "mta.rep" + std::to_string(r) + ".scale4", d, cfg.heads, cfg.ffn_dim),
        nn::CrossAttentionBlock(ps, "mta.rep" + std::to_string(r) + ".scale5", d, cfg.heads, cfg.ffn_dim)};
    blocks_.push_back(std::move(row));
  }
  scale_emb_ = ps.create("mta.scale_emb", {4, d}, nn::Init::Normal02);
  frame_emb_ = ps.create("mta.frame_emb", {std::max(cfg.frames, 8), d}, nn::Init::Normal02);
}

TemporalScaleBank MtaModule::temporal_concat(const std::vector<MultiScaleFeatures>& frames) const {
  if (frames.empty()) throw InputError("temporal_concat: no frames");
  const int t = static_cast<int>(frames.size());
  if (t > frame_emb_.dim(0))
    throw InputError("temporal_concat: clip length " + std::to_string(t) + " exceeds supported max " +
                     std::to_string(frame_emb_.dim(0)));
  TemporalScaleBank out;
  const int c = frames[0].scale[0].dim(2);
  for (int s = 0; s < 4; ++s) {
    const int h = frames[0].scale[s].dim(0);
    const int w = frames[0].scale[s].dim(1);
    Tensor pos = nn::sinusoidal_2d(h, w, c);
    Tensor semb = ops::reshape(ops::slice(scale_emb_, 0, s, 1), {c});
    std::vector<Tensor> parts;
    parts.reserve(t);
    for (int j = 0; j < t; ++j) {
      const Tensor& f = frames[j].scale[s];
      if (f.dim(0) != h || f.dim(1) != w || f.dim(2) != c)
        throw InputError("temporal_concat: inconsistent extents at frame " + std::to_string(j) + ", " +
                         shape_str(f.shape()) + " vs [" + std::to_string(h) + "x" + std::to_string(w) + "x" +
                         std::to_string(c) + "]");
      Tensor tok = ops::reshape(f, {h * w, c});
      tok = ops::add(tok, pos);
      tok = ops::add(tok, semb);
      tok = ops::add(tok, ops::slice(frame_emb_, 0, j, 1));
      parts.push_back(tok);
    }
    out.bank[s] = parts.size() == 1 ? parts[0] : ops::concat(parts, 0);
  }
  return out;
}

Tensor MtaModule::forward(const Tensor& fr, const TemporalScaleBank& banks) const {
  Tensor x = fr;
  for (const auto& row : blocks_)
    for (int s = 0; s < 4; ++s) x = row[s].forward(x, banks.bank[s]);
  return x;
}

Tensor make_queries(const Tensor& ff, int t, int n, const Tensor& eq, const Tensor& et) {
  if (t < 1 || n < 1) throw ContractError("make_queries: T and N must be >= 1");
  if (eq.dim(0) < n) throw ContractError("make_queries: query embedding has fewer than N rows");
  if (et.dim(0) < t) throw ContractError("make_queries: time embedding has fewer than T rows");
  const int c = ff.dim(1);
  Tensor cls = ops::reshape(ops::slice(ff, 0, 0, 1), {1, 1, c});
  Tensor q = ops::reshape(ops::slice(eq, 0, 0, n), {1, n, c});
  Tensor tm = ops::reshape(ops::slice(et, 0, 0, t), {t, 1, c});
  return ops::add(ops::add(cls, q), tm);  // [T,N,C]
}

}  // namespace refvos

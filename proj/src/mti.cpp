#include "refvos/mti.hpp"

namespace refvos {

MtiEncoder::MtiEncoder(nn::ParamStore& ps, const RunConfig& cfg)
    : window_(cfg.mti_window), cross_query_(cfg.mti_cross_query) {
  if (window_ < 1) throw ContractError("mti.window must be >= 1");
  const int d = cfg.model_dim;
  for (int i = 0; i < cfg.mti_enc_blocks; ++i) {
    const std::string base = "mti.enc.block" + std::to_string(i);
    Block b{nn::MultiHeadAttention(ps, base + ".attn", d, cfg.heads),
            nn::FeedForward(ps, base + ".ffn", d, cfg.ffn_dim), nn::LayerNorm(ps, base + ".ln1", d),
            nn::LayerNorm(ps, base + ".ln2", d)};
    blocks_.push_back(std::move(b));
  }
}

Tensor MtiEncoder::encode(const Tensor& p) const {
  if (p.rank() != 3) throw ContractError("mti_encode: input must be [T,N,C], got " + shape_str(p.shape()));
  const int t = p.dim(0), n = p.dim(1), c = p.dim(2);
  const int w = std::min(window_, t);  // window > T degenerates to full attention
  Tensor x = p;
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const Block& b = blocks_[bi];
    const int shift = (bi % 2 == 1 && w < t) ? w / 2 : 0;
    Tensor h = b.ln1.forward(x);
    // Window partition along the temporal axis: [0,shift), [shift,shift+w), ...
    std::vector<Tensor> upd_parts;
    int f0 = 0;
    while (f0 < t) {
      int len = (f0 == 0 && shift > 0) ? shift : std::min(w, t - f0);
      Tensor win = ops::slice(h, 0, f0, len);  // [len,N,C]
      Tensor out;
      if (cross_query_) {
        Tensor tok = ops::reshape(win, {len * n, c});
        out = ops::reshape(b.attn.forward(tok, tok, tok), {len, n, c});
      } else {
        // Same-index tracks only: one attention per query index.
        Tensor byq = ops::permute(win, {1, 0, 2});  // [N,len,C]
        std::vector<Tensor> rows;
        rows.reserve(n);
        for (int qi = 0; qi < n; ++qi) {
          Tensor seq = ops::reshape(ops::slice(byq, 0, qi, 1), {len, c});
          rows.push_back(ops::reshape(b.attn.forward(seq, seq, seq), {1, len, c}));
        }
        Tensor stacked = rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
        out = ops::permute(stacked, {1, 0, 2});
      }
      upd_parts.push_back(out);
      f0 += len;
    }
    Tensor upd = upd_parts.size() == 1 ? upd_parts[0] : ops::concat(upd_parts, 0);
    x = ops::add(x, upd);
    x = ops::add(x, b.ffn.forward(b.ln2.forward(x)));
  }
  return x;
}

MtiDecoder::MtiDecoder(nn::ParamStore& ps, const RunConfig& cfg) {
  const int d = cfg.model_dim;
  q_ = ps.create("mti.q", {cfg.num_queries, d}, nn::Init::Normal02);
  temporal_emb_ = ps.create("mti.dec.temporal_emb", {std::max(cfg.frames, 8), d}, nn::Init::Normal02);
  for (int i = 0; i < cfg.mti_dec_blocks; ++i)
    blocks_.emplace_back(ps, "mti.dec.block" + std::to_string(i), d, cfg.heads, cfg.ffn_dim);
}

Tensor MtiDecoder::decode(const Tensor& p_prime, bool temporal_keys) const {
  if (p_prime.rank() != 3)
    throw ContractError("mti_decode: input must be [T,N,C], got " + shape_str(p_prime.shape()));
  const int t = p_prime.dim(0), n = p_prime.dim(1), c = p_prime.dim(2);
  if (t > temporal_emb_.dim(0))
    throw InputError("mti_decode: clip length exceeds supported max " + std::to_string(temporal_emb_.dim(0)));
  Tensor mem_v = ops::reshape(p_prime, {t * n, c});
  Tensor mem_k = mem_v;
  if (temporal_keys) {
    Tensor emb = ops::reshape(ops::slice(temporal_emb_, 0, 0, t), {t, 1, c});
    mem_k = ops::reshape(ops::add(p_prime, emb), {t * n, c});
  }
  Tensor x = q_;
  for (const auto& b : blocks_) x = b.forward(x, mem_k, mem_v);
  return x;
}

}  // namespace refvos

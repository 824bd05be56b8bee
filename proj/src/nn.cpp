#include "refvos/nn.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace refvos {
namespace nn {

Tensor ParamStore::create(const std::string& name, Shape shape, Init init) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  Tensor t(shape);
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      for (auto& v : t.values()) v = 1.0;
      break;
    case Init::XavierUniform: {
      // fan_in/fan_out from the last two extents; 1-D tensors use their length
      double fan_in = shape.size() >= 2 ? shape[shape.size() - 2] : shape.back();
      double fan_out = shape.back();
      double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (auto& v : t.values()) v = rng_.uniform(-bound, bound);
      break;
    }
    case Init::Normal02:
      for (auto& v : t.values()) v = rng_.normal(0.0, 0.02);
      break;
  }
  if (precision() == Precision::f32)
    for (auto& v : t.values()) v = round_value(v, Precision::f32);
  t.mark_param(name);
  index_[name] = params_.size();
  params_.push_back(t);
  return t;
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParamStore::count_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

void ParamStore::zero_by_suffix(const std::vector<std::string>& suffixes) {
  for (auto& p : params_) {
    for (const auto& suf : suffixes) {
      const std::string& n = p.name();
      if (n.size() >= suf.size() && n.compare(n.size() - suf.size(), suf.size(), suf) == 0) {
        for (auto& x : p.values()) x = 0.0;
        break;
      }
    }
  }
}

Linear::Linear(ParamStore& ps, const std::string& name, int in, int out, Init init) {
  w = ps.create(name + ".w", {in, out}, init);
  b = ps.create(name + ".b", {out}, Init::Zeros);
}

Tensor Linear::forward(const Tensor& x) const {
  const int in = w.dim(0);
  if (x.shape().back() != in)
    throw ContractError("linear: input dim " + shape_str(x.shape()) + " does not match weight " +
                        shape_str(w.shape()));
  Shape orig = x.shape();
  std::size_t rows = x.numel() / static_cast<std::size_t>(in);
  Tensor flat = x.rank() == 2 ? x : ops::reshape(x, {static_cast<int>(rows), in});
  Tensor y = ops::add(ops::matmul(flat, w), b);
  if (x.rank() != 2) {
    Shape out_shape(orig.begin(), orig.end() - 1);
    out_shape.push_back(w.dim(1));
    y = ops::reshape(y, out_shape);
  }
  return y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim) {
  gamma = ps.create(name + ".g", {dim}, Init::Ones);
  beta = ps.create(name + ".b", {dim}, Init::Zeros);
}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& name, int dim, int heads_)
    : wq(ps, name + ".q", dim, dim),
      wk(ps, name + ".k", dim, dim),
      wv(ps, name + ".v", dim, dim),
      wo(ps, name + ".out", dim, dim),
      heads(heads_) {
  if (dim % heads_ != 0)
    throw ContractError("attention dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads_));
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v) const {
  const int c = wq.in_features();
  const int lq = q.dim(0), lk = k.dim(0);
  const int dh = c / heads;
  auto split = [&](const Tensor& t, int l) {
    // [L,C] -> [heads, L, dh]
    return ops::permute(ops::reshape(t, {l, heads, dh}), {1, 0, 2});
  };
  Tensor qh = split(wq.forward(q), lq);
  Tensor kh = split(wk.forward(k), lk);
  Tensor vh = split(wv.forward(v), lk);
  Tensor scores = ops::matmul(qh, ops::permute(kh, {0, 2, 1}));
  scores = ops::mul_scalar(scores, 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor probs = ops::softmax(scores, 2);
  Tensor ctx = ops::matmul(probs, vh);                        // [heads, Lq, dh]
  ctx = ops::reshape(ops::permute(ctx, {1, 0, 2}), {lq, c});  // [Lq, C]
  return wo.forward(ctx);
}

FeedForward::FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden)
    : w1(ps, name + ".w1", dim, hidden), w2(ps, name + ".w2", hidden, dim) {}

SelfAttentionBlock::SelfAttentionBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_dim)
    : attn(ps, name + ".attn", dim, heads),
      ffn(ps, name + ".ffn", dim, ffn_dim),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim) {}

Tensor SelfAttentionBlock::forward(const Tensor& x) const {
  Tensor h = ln1.forward(x);
  Tensor y = ops::add(x, attn.forward(h, h, h));
  return ops::add(y, ffn.forward(ln2.forward(y)));
}

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_dim)
    : attn(ps, name + ".attn", dim, heads),
      ffn(ps, name + ".ffn", dim, ffn_dim),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim) {}

Tensor CrossAttentionBlock::forward(const Tensor& x, const Tensor& mem) const {
  Tensor y = ops::add(x, attn.forward(ln1.forward(x), mem, mem));
  return ops::add(y, ffn.forward(ln2.forward(y)));
}

DecoderBlock::DecoderBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_dim)
    : self_attn(ps, name + ".self", dim, heads),
      cross_attn(ps, name + ".cross", dim, heads),
      ffn(ps, name + ".ffn", dim, ffn_dim),
      ln1(ps, name + ".ln1", dim),
      ln2(ps, name + ".ln2", dim),
      ln3(ps, name + ".ln3", dim) {}

Tensor DecoderBlock::forward(const Tensor& x, const Tensor& mem) const {
  return forward(x, mem, mem);
}

Tensor DecoderBlock::forward(const Tensor& x, const Tensor& mem_k, const Tensor& mem_v) const {
  Tensor h = ln1.forward(x);
  Tensor y = ops::add(x, self_attn.forward(h, h, h));
  y = ops::add(y, cross_attn.forward(ln2.forward(y), mem_k, mem_v));
  return ops::add(y, ffn.forward(ln3.forward(y)));
}

Tensor sinusoidal_2d(int h, int w, int c) {
  static std::map<std::tuple<int, int, int, int>, Tensor> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(h, w, c, static_cast<int>(precision()));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  if (c % 2 != 0) throw ContractError("sinusoidal_2d: channel dim must be even");
  const int half = c / 2;
  Tensor t({h * w, c});
  double* p = t.data();
  const double temperature = 10000.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* row = p + (std::size_t(y) * w + x) * c;
      for (int i = 0; i < half; ++i) {
        double freq = std::pow(temperature, 2.0 * (i / 2) / half);
        double vy = y / freq;
        double vx = x / freq;
        row[i] = (i % 2 == 0) ? std::sin(vy) : std::cos(vy);
        row[half + i] = (i % 2 == 0) ? std::sin(vx) : std::cos(vx);
      }
    }
  if (precision() == Precision::f32)
    for (auto& v : t.values()) v = round_value(v, Precision::f32);
  cache.emplace(key, t);
  return t;
}

}  // namespace nn
}  // namespace refvos

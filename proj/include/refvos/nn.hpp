#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "refvos/ops.hpp"
#include "refvos/tensor.hpp"

namespace refvos {
namespace nn {

enum class Init { Zeros, Ones, XavierUniform, Normal02 };

// Owns every trainable tensor of a model in creation order. Creation order is
// the serialization and optimizer iteration order, so it must be deterministic.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : rng_(seed) {}

  Tensor create(const std::string& name, Shape shape, Init init);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Tensor>& all() const { return params_; }
  std::size_t count_values() const;
  void zero_grads();

  // Zeroes every parameter whose name ends with one of the suffixes.
  void zero_by_suffix(const std::vector<std::string>& suffixes);

  Rng& rng() { return rng_; }

 private:
  std::vector<Tensor> params_;
  std::unordered_map<std::string, std::size_t> index_;
  Rng rng_;
};

struct Linear {
  Tensor w, b;  // [in,out], [out]

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in, int out, Init init = Init::XavierUniform);
  // Applies to the last axis; leading axes are flattened.
  Tensor forward(const Tensor& x) const;
  int in_features() const { return w.dim(0); }
  int out_features() const { return w.dim(1); }
};

struct LayerNorm {
  Tensor gamma, beta;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim);
  Tensor forward(const Tensor& x) const { return ops::layer_norm(x, gamma, beta, eps); }
};

// Standard scaled dot-product attention with per-head split.
// q: [Lq,C], k/v: [Lk,C] -> [Lq,C].
struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& name, int dim, int heads);
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v) const;
};

struct FeedForward {
  Linear w1, w2;

  FeedForward() = default;
  FeedForward(ParamStore& ps, const std::string& name, int dim, int hidden);
  Tensor forward(const Tensor& x) const { return w2.forward(ops::gelu(w1.forward(x))); }
};

// Pre-norm residual blocks: with the residual-branch output projections
// (attention wo, feed-forward w2) zeroed, each block is the identity map.
struct SelfAttentionBlock {
  MultiHeadAttention attn;
  FeedForward ffn;
  LayerNorm ln1, ln2;

  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_dim);
  Tensor forward(const Tensor& x) const;
};

struct CrossAttentionBlock {
  MultiHeadAttention attn;
  FeedForward ffn;
  LayerNorm ln1, ln2;

  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_dim);
  Tensor forward(const Tensor& x, const Tensor& mem) const;
};

struct DecoderBlock {
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
  LayerNorm ln1, ln2, ln3;

  DecoderBlock() = default;
  DecoderBlock(ParamStore& ps, const std::string& name, int dim, int heads, int ffn_dim);
  Tensor forward(const Tensor& x, const Tensor& mem) const;
  // Separate key/value memories (position tags on keys only).
  Tensor forward(const Tensor& x, const Tensor& mem_k, const Tensor& mem_v) const;
};

// Fixed 2D sinusoidal position embedding, [H*W, C]; cached per (h,w,c).
Tensor sinusoidal_2d(int h, int w, int c);

}  // namespace nn
}  // namespace refvos

#include "refvos/ref_encoders.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace refvos {

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> v = {
        // colors (0-7)
        "red", "green", "blue", "yellow", "cyan", "magenta", "orange", "white",
        // shapes (8-10)
        "circle", "square", "triangle",
        // motion words (11-19)
        "static", "moving-right", "moving-left", "moving-up", "moving-down", "moving-up-right",
        "moving-up-left", "moving-down-right", "moving-down-left",
        // spatial words (20-23)
        "left", "right", "top", "bottom",
        // misc (24-31)
        "the", "a", "object", "thing", "small", "large", "slow", "fast"};
    for (int i = static_cast<int>(v.size()); i < 64; ++i) v.push_back("pad" + std::to_string(i));
    return v;
  }();
  return words;
}

int token_id(const std::string& word) {
  const auto& v = vocabulary();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] == word) return static_cast<int>(i);
  throw InputError("unknown token: '" + word + "'");
}

Tensor stft_spectrogram(const AudioReference& ref, int window, int hop) {
  if (window < 4 || hop < 1) throw ContractError("stft: bad window/hop");
  const auto& x = ref.waveform;
  if (static_cast<int>(x.size()) < window)
    throw InputError("stft: waveform length " + std::to_string(x.size()) + " shorter than window " +
                     std::to_string(window));
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("stft: non-finite sample in waveform");

  const int frames = static_cast<int>((x.size() - window) / hop) + 1;
  const int bins = window / 2 + 1;

  // Hann window and DFT tables, cached per window size.
  static std::map<int, std::vector<double>> win_cache, cos_cache, sin_cache;
  static std::mutex mu;
  const std::vector<double>*win, *cosk, *sink;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = win_cache.find(window);
    if (it == win_cache.end()) {
      std::vector<double> w(window), ck(std::size_t(bins) * window), sk(std::size_t(bins) * window);
      for (int n = 0; n < window; ++n) w[n] = 0.5 * (1.0 - std::cos(2.0 * M_PI * n / window));
      for (int k = 0; k < bins; ++k)
        for (int n = 0; n < window; ++n) {
          double a = 2.0 * M_PI * k * n / window;
          ck[std::size_t(k) * window + n] = std::cos(a);
          sk[std::size_t(k) * window + n] = std::sin(a);
        }
      win_cache[window] = std::move(w);
      cos_cache[window] = std::move(ck);
      sin_cache[window] = std::move(sk);
    }
    win = &win_cache[window];
    cosk = &cos_cache[window];
    sink = &sin_cache[window];
  }

  Tensor out({frames, bins});
  double* po = out.data();
  std::vector<double> seg(window);
  for (int f = 0; f < frames; ++f) {
    const double* src = x.data() + std::size_t(f) * hop;
    for (int n = 0; n < window; ++n) seg[n] = src[n] * (*win)[n];
    for (int k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      const double* ck = cosk->data() + std::size_t(k) * window;
      const double* sk = sink->data() + std::size_t(k) * window;
      for (int n = 0; n < window; ++n) {
        re += seg[n] * ck[n];
        im -= seg[n] * sk[n];
      }
      po[std::size_t(f) * bins + k] = std::log1p(std::hypot(re, im));
    }
  }
  finalize_output(*out.node(), "stft_spectrogram");
  return out;
}

TextEncoder::TextEncoder(nn::ParamStore& ps, const RunConfig& cfg) : max_len_(cfg.max_text_len) {
  const int d = cfg.text_dim;
  embed_ = ps.create("ref.text.embed", {64, d}, nn::Init::Normal02);
  pos_ = ps.create("ref.text.pos", {cfg.max_text_len, d}, nn::Init::Normal02);
  cls_ = ps.create("ref.text.cls", {1, d}, nn::Init::Normal02);
  for (int i = 0; i < cfg.text_layers; ++i)
    blocks_.emplace_back(ps, "ref.text.block" + std::to_string(i), d, cfg.text_heads, 2 * d);
  proj_ = nn::Linear(ps, "ref.text.proj", d, cfg.model_dim);
}

Tensor TextEncoder::forward(const TextReference& ref) const {
  if (ref.tokens.empty()) throw InputError("encode_text: empty token list");
  const int l = static_cast<int>(ref.tokens.size());
  if (l > max_len_)
    throw InputError("encode_text: length " + std::to_string(l) + " exceeds max " + std::to_string(max_len_));
  Tensor e = ops::embedding(embed_, ref.tokens);
  e = ops::add(e, ops::slice(pos_, 0, 0, l));
  Tensor x = ops::concat({cls_, e}, 0);  // [(L+1), text_dim]
  for (const auto& b : blocks_) x = b.forward(x);
  return proj_.forward(x);  // [(L+1), model_dim]
}

AudioEncoder::AudioEncoder(nn::ParamStore& ps, const RunConfig& cfg)
    : bins_(cfg.stft_window / 2 + 1) {
  if (cfg.audio_channels.size() != 2) throw ContractError("ref.audio_channels must have two entries");
  const int c0 = cfg.audio_channels[0], c1 = cfg.audio_channels[1];
  conv1_ = ps.create("ref.audio.conv1.w", {3, 3, 1, c0}, nn::Init::XavierUniform);
  bias1_ = ps.create("ref.audio.conv1.b", {c0}, nn::Init::Zeros);
  conv2_ = ps.create("ref.audio.conv2.w", {3, 3, c0, c1}, nn::Init::XavierUniform);
  bias2_ = ps.create("ref.audio.conv2.b", {c1}, nn::Init::Zeros);
  const int b1 = (bins_ + 1) / 2;
  const int b2 = (b1 + 1) / 2;
  flat_dim_ = b2 * c1;
  feat_ = nn::Linear(ps, "ref.audio.feat", flat_dim_, cfg.audio_dim);
  proj_ = nn::Linear(ps, "ref.audio.proj", cfg.audio_dim, cfg.model_dim);
  cls_ = ps.create("ref.audio.cls", {1, cfg.model_dim}, nn::Init::Normal02);
  mix_ = nn::SelfAttentionBlock(ps, "ref.audio.mix", cfg.model_dim, cfg.text_heads, 2 * cfg.model_dim);
  if (cfg.audio_frozen) {
    // Appendix-style frozen audio encoder: conv stack and feature head fixed,
    // projection stays trainable.
    conv1_.set_requires_grad(false);
    bias1_.set_requires_grad(false);
    conv2_.set_requires_grad(false);
    bias2_.set_requires_grad(false);
    feat_.w.set_requires_grad(false);
    feat_.b.set_requires_grad(false);
  }
}

Tensor AudioEncoder::forward(const Tensor& spec) const {
  if (spec.rank() != 2 || spec.dim(1) != bins_)
    throw ContractError("encode_audio: expected [frames," + std::to_string(bins_) + "], got " +
                        shape_str(spec.shape()));
  const int frames = spec.dim(0);
  Tensor x = ops::reshape(spec, {frames, bins_, 1});
  x = ops::relu(ops::add(ops::conv2d(x, conv1_, 1, 1), bias1_));
  x = ops::downsample(x, 1, 2);
  x = ops::relu(ops::add(ops::conv2d(x, conv2_, 1, 1), bias2_));
  x = ops::downsample(x, 1, 2);
  x = ops::reshape(x, {frames, flat_dim_});
  x = ops::relu(feat_.forward(x));       // per-frame audio features
  x = proj_.forward(x);                  // [frames, model_dim]
  Tensor y = ops::concat({cls_, x}, 0);  // [(frames+1), model_dim]
  return mix_.forward(y);
}

}  // namespace refvos

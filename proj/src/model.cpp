#include "refvos/model.hpp"

namespace refvos {

ClipInput ClipInput::from(const data::ClipData& d) {
  ClipInput in;
  in.frames = d.frames;
  in.modality = d.modality;
  in.text.tokens = d.tokens;
  in.audio.waveform = d.audio;
  return in;
}

Model::Model(const RunConfig& cfg)
    : cfg_(cfg),
      ps_(cfg.seed),
      text_encoder_(ps_, cfg),
      audio_encoder_(ps_, cfg),
      backbone_(ps_, cfg),
      fusion_(ps_, cfg),
      projector_(ps_, cfg),
      mta_(ps_, cfg),
      encoder_(ps_, cfg),
      decoder_(ps_, cfg),
      mti_encoder_(ps_, cfg),
      mti_decoder_(ps_, cfg),
      head_(ps_, cfg) {
  eq_ = ps_.create("query.eq", {cfg.num_queries, cfg.model_dim}, nn::Init::Normal02);
  et_ = ps_.create("query.et", {std::max(cfg.frames, 8), cfg.model_dim}, nn::Init::Normal02);
}

Tensor Model::encode_reference(const ClipInput& in) const {
  if (in.modality == "text") return text_encoder_.forward(in.text);
  if (in.modality == "audio") {
    Tensor spec = stft_spectrogram(in.audio, cfg_.stft_window, cfg_.stft_hop);
    return audio_encoder_.forward(spec);
  }
  throw InputError("unknown reference modality '" + in.modality + "'");
}

std::vector<MultiScaleFeatures> Model::visual_features(const Tensor& frames, const Tensor& fr) const {
  if (frames.rank() != 4) throw InputError("clip frames must be [T,H,W,3], got " + shape_str(frames.shape()));
  const int t = frames.dim(0), h = frames.dim(1), w = frames.dim(2);
  std::vector<MultiScaleFeatures> feats;
  feats.reserve(t);
  for (int j = 0; j < t; ++j) {
    Tensor frame = ops::reshape(ops::slice(frames, 0, j, 1), {h, w, 3});
    StageFeatures stages = backbone_.extract(frame);
    stages = fusion_.fuse(stages, fr);
    feats.push_back(projector_.project(stages));
  }
  return feats;
}

Model::Forward Model::forward(const ClipInput& in) const {
  Forward out;
  const int t = in.frames.dim(0);
  out.fr = encode_reference(in);
  std::vector<MultiScaleFeatures> feats = visual_features(in.frames, out.fr);
  if (cfg_.mta_enabled) {
    TemporalScaleBank banks = mta_.temporal_concat(feats);
    out.ff = mta_.forward(out.fr, banks);
  } else {
    out.ff = out.fr;
  }
  Tensor iq = make_queries(out.ff, t, cfg_.num_queries, eq_, et_);
  auto [p, encs] = run_video(encoder_, decoder_, iq, feats);
  out.p = p;
  out.encs = std::move(encs);
  if (cfg_.mti_enabled) {
    out.p_prime = mti_encoder_.encode(out.p);
    out.q_prime = mti_decoder_.decode(out.p_prime);
  } else {
    out.p_prime = out.p;
    out.q_prime = mti_decoder_.queries();
  }
  out.pred = head_.forward(out.p_prime, out.q_prime, out.encs);
  return out;
}

ObjectTarget make_target(const std::vector<metrics::BinaryMask>& masks, int hm, int wm) {
  ObjectTarget tgt;
  for (const auto& m : masks) {
    FrameTarget ft;
    const std::size_t area = m.count();
    ft.present = area > 0;
    if (ft.present) {
      int x0 = m.w, x1 = -1, y0 = m.h, y1 = -1;
      for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x)
          if (m.at(y, x)) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
          }
      ft.box = {(x0 + x1 + 1.0) / (2.0 * m.w), (y0 + y1 + 1.0) / (2.0 * m.h),
                (x1 - x0 + 1.0) / m.w, (y1 - y0 + 1.0) / m.h};
    }
    Tensor full({m.h, m.w});
    for (std::size_t i = 0; i < m.v.size(); ++i) full.data()[i] = m.v[i] ? 1.0 : 0.0;
    ft.mask = full;

    if (m.h % hm != 0 || m.w % wm != 0)
      throw ContractError("make_target: mask " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                          " not divisible by logit grid " + std::to_string(hm) + "x" + std::to_string(wm));
    const int fy = m.h / hm, fx = m.w / wm;
    Tensor small({hm, wm});
    for (int by = 0; by < hm; ++by)
      for (int bx = 0; bx < wm; ++bx) {
        int on = 0;
        for (int y = by * fy; y < (by + 1) * fy; ++y)
          for (int x = bx * fx; x < (bx + 1) * fx; ++x) on += m.at(y, x) ? 1 : 0;
        small.data()[std::size_t(by) * wm + bx] = (2 * on >= fy * fx) ? 1.0 : 0.0;
      }
    ft.mask_small = small;
    tgt.frames.push_back(std::move(ft));
  }
  return tgt;
}

}  // namespace refvos

#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "refvos/image_io.hpp"
#include "refvos/tensor.hpp"

namespace refvos {
namespace data {

struct ObjectSpec {
  int shape = 0;      // 0 circle, 1 square, 2 triangle
  int color = 0;      // palette index 0..7
  double radius = 8;  // pixels
  double x = 0, y = 0;    // center at frame 0
  double vx = 0, vy = 0;  // pixels per frame
};

struct SceneSpec {
  int canvas = 64;
  std::vector<ObjectSpec> objects;  // painted in order; later objects are in front
  int referent = 0;
  std::uint64_t seed = 0;
};

struct SyntheticClip {
  std::vector<Image> frames;
  std::vector<metrics::BinaryMask> masks;  // visible-region masks of the referent
  std::vector<int> text_tokens;
  std::vector<std::string> token_words;
  std::vector<double> audio;
  SceneSpec scene;
};

const std::array<std::array<double, 3>, 8>& color_palette();

// Analytic rasterization of one object at frame index j (no occlusion).
metrics::BinaryMask rasterize_object(const ObjectSpec& obj, int canvas, int frame);

// Motion word token id for a velocity (octant-quantized; |v| < 0.5 is static).
int motion_token(double vx, double vy);

// Reference tokens under the disambiguation rule: color + shape, plus the
// motion word when another object shares color and shape.
std::vector<int> reference_tokens(const SceneSpec& spec);
// True when exactly one object satisfies the tokens.
bool reference_unique(const SceneSpec& spec, const std::vector<int>& tokens);

SceneSpec random_scene(std::uint64_t seed, int canvas = 64, bool still = false);

// Deterministic clip from a scene; throws ContractError if the referent is
// fully occluded in every frame (callers regenerate with a fresh seed).
SyntheticClip generate_clip(const SceneSpec& spec, int t = 5);

// Retries fresh scenes until valid; logs each regeneration when log != null.
SyntheticClip generate_valid_clip(std::uint64_t seed, int t = 5, int canvas = 64, bool still = false,
                                  std::ostream* log = nullptr);

// class-keyed carrier + motion-keyed amplitude modulation + noise (10 dB SNR)
std::vector<double> synthesize_audio(int color, int shape, int motion_tok, int t, std::uint64_t seed);

// ---- pseudo-video augmentation ----

struct Warp {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};  // forward 3x3 homography
};

struct WarpParams {
  double rotation_max_deg = 10.0;
  double translate_max_frac = 0.05;
  double scale_min = 0.95;
  double scale_max = 1.05;
  double perspective_max = 8e-4;
};

Warp make_warp(int canvas, double rot_deg, double scale, double tx, double ty, double px = 0.0,
               double py = 0.0);
Warp random_warp(Rng& rng, const WarpParams& p, int canvas);

Image warp_image(const Image& src, const Warp& w);  // bilinear, edge clamp
metrics::BinaryMask warp_mask(const metrics::BinaryMask& src, const Warp& w);  // nearest, outside = 0

// Per-frame independent random warps of a static annotated image; transforms
// losing more than half of the mask are resampled.
std::pair<std::vector<Image>, std::vector<metrics::BinaryMask>> pseudo_video(
    const Image& image, const metrics::BinaryMask& mask, int t, std::uint64_t seed,
    const WarpParams& params = WarpParams());

// ---- dataset on disk ----

struct DatasetConfig {
  std::string out;
  int n_train = 8;
  int n_val = 4;
  std::uint64_t seed = 0;
  int frames = 5;
  int canvas = 64;
  std::string modality = "text";  // tag written to ref.txt line 1
  bool pseudo = false;            // pseudo-video clips from still scenes
  bool force = false;
};

void dataset_build(const DatasetConfig& cfg, std::ostream& log);

struct ClipData {
  std::string dir;
  Tensor frames;  // [T,H,W,3] in [0,1]
  std::vector<metrics::BinaryMask> masks;
  std::string modality;
  std::vector<int> tokens;
  std::vector<double> audio;
};

ClipData load_clip(const std::string& clip_dir);
std::vector<std::string> list_clips(const std::string& root, const std::string& split);

}  // namespace data
}  // namespace refvos

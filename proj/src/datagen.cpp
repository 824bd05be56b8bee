#include "refvos/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "refvos/ref_encoders.hpp"

namespace fs = std::filesystem;

namespace refvos {
namespace data {

const std::array<std::array<double, 3>, 8>& color_palette() {
  static const std::array<std::array<double, 3>, 8> palette = {{{0.90, 0.10, 0.10},
                                                                {0.10, 0.80, 0.15},
                                                                {0.15, 0.20, 0.90},
                                                                {0.90, 0.85, 0.10},
                                                                {0.10, 0.85, 0.85},
                                                                {0.85, 0.10, 0.80},
                                                                {0.95, 0.55, 0.10},
                                                                {0.95, 0.95, 0.95}}};
  return palette;
}

namespace {
constexpr double kBg[3] = {0.08, 0.08, 0.10};
constexpr int kShapeTokenBase = 8;
constexpr int kStaticToken = 11;

std::uint8_t to_byte(double v) {
  double x = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(x);
}

bool inside_object(const ObjectSpec& o, double cx, double cy, double px, double py) {
  const double dx = px - cx, dy = py - cy;
  switch (o.shape) {
    case 0:
      return dx * dx + dy * dy <= o.radius * o.radius;
    case 1:
      return std::max(std::abs(dx), std::abs(dy)) <= o.radius;
    case 2: {
      // isoceles triangle inscribed in the radius, apex up
      const double x0 = 0.0, y0 = -o.radius;
      const double x1 = -0.8660254037844386 * o.radius, y1 = 0.5 * o.radius;
      const double x2 = 0.8660254037844386 * o.radius, y2 = 0.5 * o.radius;
      auto cross = [](double ax, double ay, double bx, double by) { return ax * by - ay * bx; };
      double c0 = cross(x1 - x0, y1 - y0, dx - x0, dy - y0);
      double c1 = cross(x2 - x1, y2 - y1, dx - x1, dy - y1);
      double c2 = cross(x0 - x2, y0 - y2, dx - x2, dy - y2);
      return (c0 >= 0 && c1 >= 0 && c2 >= 0) || (c0 <= 0 && c1 <= 0 && c2 <= 0);
    }
    default:
      throw ContractError("unknown shape id " + std::to_string(o.shape));
  }
}

}  // namespace

metrics::BinaryMask rasterize_object(const ObjectSpec& obj, int canvas, int frame) {
  metrics::BinaryMask m(canvas, canvas);
  const double cx = obj.x + obj.vx * frame;
  const double cy = obj.y + obj.vy * frame;
  const double r = obj.radius + 1.0;
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
  const int y1 = std::min(canvas - 1, static_cast<int>(std::ceil(cy + r)));
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
  const int x1 = std::min(canvas - 1, static_cast<int>(std::ceil(cx + r)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside_object(obj, cx, cy, x + 0.5, y + 0.5)) m.set(y, x, 1);
  return m;
}

int motion_token(double vx, double vy) {
  if (std::hypot(vx, vy) < 0.5) return kStaticToken;
  double angle = std::atan2(vy, vx);  // y grows downward
  int octant = static_cast<int>(std::lround(angle / (M_PI / 4.0)));
  octant = ((octant % 8) + 8) % 8;
  // 0:right 1:down-right 2:down 3:down-left 4:left 5:up-left 6:up 7:up-right
  static const char* words[8] = {"moving-right",   "moving-down-right", "moving-down", "moving-down-left",
                                 "moving-left",    "moving-up-left",    "moving-up",   "moving-up-right"};
  return token_id(words[octant]);
}

std::vector<int> reference_tokens(const SceneSpec& spec) {
  const ObjectSpec& ref = spec.objects.at(spec.referent);
  std::vector<int> toks = {ref.color, kShapeTokenBase + ref.shape};
  bool ambiguous = false;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (static_cast<int>(i) == spec.referent) continue;
    const ObjectSpec& o = spec.objects[i];
    if (o.color == ref.color && o.shape == ref.shape) ambiguous = true;
  }
  if (ambiguous) toks.push_back(motion_token(ref.vx, ref.vy));
  return toks;
}

bool reference_unique(const SceneSpec& spec, const std::vector<int>& tokens) {
  int color = -1, shape = -1, motion = -1;
  for (int t : tokens) {
    if (t < 8) color = t;
    else if (t < 11) shape = t - kShapeTokenBase;
    else if (t < 20) motion = t;
  }
  int matches = 0;
  for (const auto& o : spec.objects) {
    if (color >= 0 && o.color != color) continue;
    if (shape >= 0 && o.shape != shape) continue;
    if (motion >= 0 && motion_token(o.vx, o.vy) != motion) continue;
    ++matches;
  }
  return matches == 1;
}

SceneSpec random_scene(std::uint64_t seed, int canvas, bool still) {
  Rng rng(seed);
  SceneSpec spec;
  spec.canvas = canvas;
  spec.seed = seed;
  const int n = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n; ++i) {
    ObjectSpec o;
    o.shape = static_cast<int>(rng.below(3));
    o.color = static_cast<int>(rng.below(8));
    o.radius = rng.uniform(6.0, 12.0);
    const double margin = o.radius + 1.0;
    o.x = rng.uniform(margin, canvas - margin);
    o.y = rng.uniform(margin, canvas - margin);
    if (!still) {
      o.vx = rng.uniform(-2.5, 2.5);
      o.vy = rng.uniform(-2.5, 2.5);
    }
    spec.objects.push_back(o);
  }
  spec.referent = static_cast<int>(rng.below(n));
  return spec;
}

SyntheticClip generate_clip(const SceneSpec& spec, int t) {
  if (spec.objects.empty()) throw InputError("generate_clip: scene has no objects");
  if (spec.referent < 0 || spec.referent >= static_cast<int>(spec.objects.size()))
    throw InputError("generate_clip: referent index out of range");
  SyntheticClip clip;
  clip.scene = spec;
  const int canvas = spec.canvas;
  const auto& palette = color_palette();

  bool any_visible = false;
  for (int j = 0; j < t; ++j) {
    // paint back to front
    Image img(canvas, canvas);
    for (int y = 0; y < canvas; ++y)
      for (int x = 0; x < canvas; ++x) {
        auto* p = img.px(y, x);
        p[0] = to_byte(kBg[0]);
        p[1] = to_byte(kBg[1]);
        p[2] = to_byte(kBg[2]);
      }
    std::vector<metrics::BinaryMask> rasters;
    rasters.reserve(spec.objects.size());
    for (const auto& o : spec.objects) rasters.push_back(rasterize_object(o, canvas, j));
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
      const auto& col = palette[spec.objects[i].color];
      for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x)
          if (rasters[i].at(y, x)) {
            auto* p = img.px(y, x);
            p[0] = to_byte(col[0]);
            p[1] = to_byte(col[1]);
            p[2] = to_byte(col[2]);
          }
    }
    // visible-region mask: referent minus anything painted over it
    metrics::BinaryMask mask = rasters[spec.referent];
    for (std::size_t i = spec.referent + 1; i < rasters.size(); ++i)
      for (std::size_t k = 0; k < mask.v.size(); ++k)
        if (rasters[i].v[k]) mask.v[k] = 0;
    if (mask.count() > 0) any_visible = true;
    clip.frames.push_back(std::move(img));
    clip.masks.push_back(std::move(mask));
  }
  if (!any_visible) throw ContractError("generate_clip: referent fully occluded in every frame");

  clip.text_tokens = reference_tokens(spec);
  for (int tok : clip.text_tokens) clip.token_words.push_back(vocabulary()[tok]);
  const ObjectSpec& ref = spec.objects[spec.referent];
  clip.audio = synthesize_audio(ref.color, ref.shape, motion_token(ref.vx, ref.vy), t, spec.seed);
  return clip;
}

SyntheticClip generate_valid_clip(std::uint64_t seed, int t, int canvas, bool still, std::ostream* log) {
  Rng mix(seed ^ 0xa5a5a5a5a5a5a5a5ull);
  std::uint64_t scene_seed = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    SceneSpec spec = random_scene(scene_seed, canvas, still);
    std::vector<int> toks = reference_tokens(spec);
    if (!reference_unique(spec, toks)) {
      if (log) *log << "regenerating clip seed=" << seed << " attempt=" << attempt << " (ambiguous reference)\n";
      scene_seed = mix.next_u64();
      continue;
    }
    try {
      return generate_clip(spec, t);
    } catch (const ContractError&) {
      if (log) *log << "regenerating clip seed=" << seed << " attempt=" << attempt << " (referent occluded)\n";
      scene_seed = mix.next_u64();
    }
  }
  throw ContractError("generate_valid_clip: no valid scene after 64 attempts for seed " + std::to_string(seed));
}

std::vector<double> synthesize_audio(int color, int shape, int motion_tok, int t, std::uint64_t seed) {
  const int n = 768 * t + 256;
  const int cls = color * 3 + shape;           // 24 carrier classes
  const double carrier_bin = 6.0 + 4.0 * cls;  // DFT bin for a 256 window
  const double mod_bin = 1.0 + 0.5 * (motion_tok - kStaticToken);
  const double amp = 0.5;
  // 10 dB SNR against the AM-carrier power amp^2/2 * (1 + 0.5^2/2)
  const double sigma = amp * std::sqrt(0.5 * 1.125 / 10.0);
  Rng rng(seed ^ 0xc0ffee1234567890ull);
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) {
    double carrier = std::sin(2.0 * M_PI * carrier_bin * i / 256.0);
    double am = 1.0 + 0.5 * std::cos(2.0 * M_PI * mod_bin * i / 256.0);
    x[i] = amp * carrier * am + sigma * rng.normal();
  }
  return x;
}

// ---- warps ----

namespace {

std::array<double, 9> mat_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
  std::array<double, 9> c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) c[i * 3 + j] += a[i * 3 + k] * b[k * 3 + j];
  return c;
}

std::array<double, 9> mat_inv(const std::array<double, 9>& m) {
  const double a = m[0], b = m[1], c = m[2], d = m[3], e = m[4], f = m[5], g = m[6], h = m[7], i = m[8];
  const double det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
  if (std::abs(det) < 1e-12) throw ContractError("warp: singular transform");
  const double id = 1.0 / det;
  return {(e * i - f * h) * id, (c * h - b * i) * id, (b * f - c * e) * id,
          (f * g - d * i) * id, (a * i - c * g) * id, (c * d - a * f) * id,
          (d * h - e * g) * id, (b * g - a * h) * id, (a * e - b * d) * id};
}

void apply_h(const std::array<double, 9>& m, double x, double y, double& ox, double& oy) {
  const double w = m[6] * x + m[7] * y + m[8];
  ox = (m[0] * x + m[1] * y + m[2]) / w;
  oy = (m[3] * x + m[4] * y + m[5]) / w;
}

}  // namespace

Warp make_warp(int canvas, double rot_deg, double scale, double tx, double ty, double px, double py) {
  const double c = canvas / 2.0;
  const double a = rot_deg * M_PI / 180.0;
  const std::array<double, 9> to_center = {1, 0, -c, 0, 1, -c, 0, 0, 1};
  const std::array<double, 9> persp = {1, 0, 0, 0, 1, 0, px, py, 1};
  const std::array<double, 9> lin = {scale * std::cos(a), -scale * std::sin(a), 0,
                                     scale * std::sin(a), scale * std::cos(a),  0,
                                     0,                   0,                    1};
  const std::array<double, 9> back = {1, 0, c + tx, 0, 1, c + ty, 0, 0, 1};
  Warp w;
  w.m = mat_mul(back, mat_mul(lin, mat_mul(persp, to_center)));
  return w;
}

Warp random_warp(Rng& rng, const WarpParams& p, int canvas) {
  const double rot = rng.uniform(-p.rotation_max_deg, p.rotation_max_deg);
  const double scale = rng.uniform(p.scale_min, p.scale_max);
  const double tmax = p.translate_max_frac * canvas;
  const double tx = rng.uniform(-tmax, tmax);
  const double ty = rng.uniform(-tmax, tmax);
  const double px = rng.uniform(-p.perspective_max, p.perspective_max);
  const double py = rng.uniform(-p.perspective_max, p.perspective_max);
  return make_warp(canvas, rot, scale, tx, ty, px, py);
}

Image warp_image(const Image& src, const Warp& w) {
  Image dst(src.h, src.w);
  const auto inv = mat_inv(w.m);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double sx, sy;
      apply_h(inv, x + 0.5, y + 0.5, sx, sy);
      sx -= 0.5;
      sy -= 0.5;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double tx = sx - fx, ty = sy - fy;
      auto clampi = [](int v, int lo, int hi) { return std::min(std::max(v, lo), hi); };
      const int x0 = clampi(static_cast<int>(fx), 0, src.w - 1);
      const int x1 = clampi(static_cast<int>(fx) + 1, 0, src.w - 1);
      const int y0 = clampi(static_cast<int>(fy), 0, src.h - 1);
      const int y1 = clampi(static_cast<int>(fy) + 1, 0, src.h - 1);
      auto* out = dst.px(y, x);
      for (int ch = 0; ch < 3; ++ch) {
        const double v00 = src.px(y0, x0)[ch], v01 = src.px(y0, x1)[ch];
        const double v10 = src.px(y1, x0)[ch], v11 = src.px(y1, x1)[ch];
        const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11);
        out[ch] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  return dst;
}

metrics::BinaryMask warp_mask(const metrics::BinaryMask& src, const Warp& w) {
  metrics::BinaryMask dst(src.h, src.w);
  const auto inv = mat_inv(w.m);
  for (int y = 0; y < src.h; ++y)
    for (int x = 0; x < src.w; ++x) {
      double sx, sy;
      apply_h(inv, x + 0.5, y + 0.5, sx, sy);
      const int ix = static_cast<int>(std::floor(sx));
      const int iy = static_cast<int>(std::floor(sy));
      if (ix >= 0 && ix < src.w && iy >= 0 && iy < src.h && src.at(iy, ix)) dst.set(y, x, 1);
    }
  return dst;
}

std::pair<std::vector<Image>, std::vector<metrics::BinaryMask>> pseudo_video(
    const Image& image, const metrics::BinaryMask& mask, int t, std::uint64_t seed, const WarpParams& params) {
  if (image.h != mask.h || image.w != mask.w) throw InputError("pseudo_video: image/mask shapes differ");
  if (t < 1) throw InputError("pseudo_video: t must be >= 1");
  Rng rng(seed ^ 0x5eed5eed5eed5eedull);
  const std::size_t area = mask.count();
  std::vector<Image> frames;
  std::vector<metrics::BinaryMask> masks;
  for (int j = 0; j < t; ++j) {
    for (int tries = 0;; ++tries) {
      Warp w = random_warp(rng, params, image.h);
      metrics::BinaryMask wm = warp_mask(mask, w);
      if (area == 0 || wm.count() * 2 >= area) {
        frames.push_back(warp_image(image, w));
        masks.push_back(std::move(wm));
        break;
      }
      if (tries >= 64) throw ContractError("pseudo_video: could not keep the mask in frame");
    }
  }
  return {std::move(frames), std::move(masks)};
}

// ---- dataset on disk ----

namespace {

std::string clip_dir_name(int idx) {
  std::ostringstream os;
  os << "clip_" << std::setw(5) << std::setfill('0') << idx;
  return os.str();
}

std::string frame_name(int idx, const char* ext) {
  std::ostringstream os;
  os << std::setw(3) << std::setfill('0') << idx << ext;
  return os.str();
}

void write_scene_file(const std::string& path, const SyntheticClip& clip, const std::string& modality) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out.precision(17);
  const SceneSpec& s = clip.scene;
  out << "seed=" << s.seed << "\n";
  out << "canvas=" << s.canvas << "\n";
  out << "modality=" << modality << "\n";
  out << "n_objects=" << s.objects.size() << "\n";
  out << "referent=" << s.referent << "\n";
  for (std::size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    out << "obj" << i << ".shape=" << vocabulary()[kShapeTokenBase + o.shape] << "\n";
    out << "obj" << i << ".color=" << vocabulary()[o.color] << "\n";
    out << "obj" << i << ".radius=" << o.radius << "\n";
    out << "obj" << i << ".x=" << o.x << "\n";
    out << "obj" << i << ".y=" << o.y << "\n";
    out << "obj" << i << ".vx=" << o.vx << "\n";
    out << "obj" << i << ".vy=" << o.vy << "\n";
  }
  out << "tokens=";
  for (std::size_t i = 0; i < clip.token_words.size(); ++i) out << (i ? " " : "") << clip.token_words[i];
  out << "\n";
}

void write_clip(const std::string& dir, const SyntheticClip& clip, const std::string& modality) {
  fs::create_directories(dir + "/frames");
  fs::create_directories(dir + "/masks");
  for (std::size_t j = 0; j < clip.frames.size(); ++j) {
    write_ppm(dir + "/frames/" + frame_name(static_cast<int>(j), ".ppm"), clip.frames[j]);
    write_pgm(dir + "/masks/" + frame_name(static_cast<int>(j), ".pgm"), clip.masks[j]);
  }
  std::ofstream ref(dir + "/ref.txt");
  if (!ref) throw InputError("cannot write " + dir + "/ref.txt");
  ref << modality << "\n";
  for (std::size_t i = 0; i < clip.token_words.size(); ++i) ref << (i ? " " : "") << clip.token_words[i];
  ref << "\n";
  write_audio_raw(dir + "/audio.raw", clip.audio);
  write_scene_file(dir + "/scene.txt", clip, modality);
}

}  // namespace

void dataset_build(const DatasetConfig& cfg, std::ostream& log) {
  if (cfg.out.empty()) throw InputError("dataset_build: output directory not set");
  if (cfg.modality != "text" && cfg.modality != "audio")
    throw InputError("dataset_build: modality must be 'text' or 'audio'");
  fs::path root(cfg.out);
  if (fs::exists(root) && !fs::is_empty(root) && !cfg.force)
    throw InputError("dataset_build: " + cfg.out + " exists and is not empty (use --force)");
  fs::create_directories(root);

  {
    std::ofstream vf(root / "vocab.txt");
    for (const auto& wrd : vocabulary()) vf << wrd << "\n";
  }
  {
    std::ofstream df(root / "dataset.txt");
    df << "seed=" << cfg.seed << "\nn_train=" << cfg.n_train << "\nn_val=" << cfg.n_val
       << "\nframes=" << cfg.frames << "\ncanvas=" << cfg.canvas << "\nmodality=" << cfg.modality
       << "\npseudo=" << (cfg.pseudo ? "true" : "false") << "\n";
  }

  auto build_split = [&](const std::string& split, int count, std::uint64_t base) {
    fs::create_directories(root / split);
    for (int i = 0; i < count; ++i) {
      const std::uint64_t seed = base + static_cast<std::uint64_t>(i);
      SyntheticClip clip = generate_valid_clip(seed, cfg.frames, cfg.canvas, cfg.pseudo, &log);
      if (cfg.pseudo) {
        auto [frames, masks] = pseudo_video(clip.frames[0], clip.masks[0], cfg.frames, seed);
        clip.frames = std::move(frames);
        clip.masks = std::move(masks);
      }
      if (!reference_unique(clip.scene, clip.text_tokens))
        throw ContractError("dataset_build: reference not unique for seed " + std::to_string(seed));
      write_clip((root / split / clip_dir_name(i)).string(), clip, cfg.modality);
    }
    log << "wrote " << count << " clips to " << (root / split).string() << "\n";
  };
  // splits draw from disjoint seed ranges
  build_split("train", cfg.n_train, cfg.seed);
  build_split("val", cfg.n_val, cfg.seed + 1000000ull);
}

ClipData load_clip(const std::string& clip_dir) {
  ClipData out;
  out.dir = clip_dir;
  std::vector<std::string> frame_files;
  fs::path fdir = fs::path(clip_dir) / "frames";
  if (!fs::exists(fdir)) throw InputError("load_clip: missing frames directory in " + clip_dir);
  for (const auto& e : fs::directory_iterator(fdir))
    if (e.path().extension() == ".ppm") frame_files.push_back(e.path().string());
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.empty()) throw InputError("load_clip: no frames in " + clip_dir);

  std::vector<Image> imgs;
  for (const auto& f : frame_files) imgs.push_back(read_ppm(f));
  const int t = static_cast<int>(imgs.size());
  const int h = imgs[0].h, w = imgs[0].w;
  Tensor frames({t, h, w, 3});
  double* p = frames.data();
  for (int j = 0; j < t; ++j) {
    if (imgs[j].h != h || imgs[j].w != w) throw InputError("load_clip: frame sizes differ in " + clip_dir);
    for (std::size_t i = 0; i < imgs[j].rgb.size(); ++i)
      p[std::size_t(j) * h * w * 3 + i] = imgs[j].rgb[i] / 255.0;
  }
  out.frames = frames;

  for (int j = 0; j < t; ++j) {
    fs::path mp = fs::path(clip_dir) / "masks" / frame_name(j, ".pgm");
    if (!fs::exists(mp)) throw InputError("load_clip: missing mask " + mp.string());
    out.masks.push_back(read_pgm(mp.string()));
  }

  std::ifstream ref(fs::path(clip_dir) / "ref.txt");
  if (!ref) throw InputError("load_clip: missing ref.txt in " + clip_dir);
  std::getline(ref, out.modality);
  if (out.modality != "text" && out.modality != "audio")
    throw InputError("load_clip: bad modality tag '" + out.modality + "' in " + clip_dir);
  std::string tok_line;
  std::getline(ref, tok_line);
  std::istringstream ts(tok_line);
  std::string wrd;
  while (ts >> wrd) out.tokens.push_back(token_id(wrd));
  if (out.tokens.empty()) throw InputError("load_clip: no reference tokens in " + clip_dir);

  fs::path ap = fs::path(clip_dir) / "audio.raw";
  if (fs::exists(ap)) out.audio = read_audio_raw(ap.string());
  if (out.modality == "audio" && out.audio.empty())
    throw InputError("load_clip: audio modality but no audio.raw in " + clip_dir);
  return out;
}

std::vector<std::string> list_clips(const std::string& root, const std::string& split) {
  fs::path dir = fs::path(root) / split;
  if (!fs::exists(dir)) throw InputError("list_clips: no such split directory " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw InputError("list_clips: empty split " + dir.string());
  return out;
}

}  // namespace data
}  // namespace refvos

#include "refvos/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace refvos {
namespace train {

namespace {

int auto_workers(int requested, int jobs) {
  if (requested > 0) return std::min(requested, jobs);
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return std::max(1, std::min<int>(static_cast<int>(hw), jobs));
}

// Runs fn(i) for i in [0,n) on `workers` threads; items are assigned
// round-robin so results keyed by index stay deterministic.
template <class Fn>
void parallel_for(int n, int workers, Fn fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

int resolve_boundary_tolerance(const RunConfig& cfg, int h, int w) {
  return cfg.boundary_tolerance > 0 ? cfg.boundary_tolerance : metrics::default_boundary_tolerance(h, w);
}

std::vector<metrics::BinaryMask> predict_masks(const Model& model, const ClipInput& in) {
  Model::Forward fwd = model.forward(in);
  const int t = in.frames.dim(0), h = in.frames.dim(1), w = in.frames.dim(2);
  const int n = fwd.pred.class_logits.dim(0);
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double s = fwd.pred.class_logits.data()[i];
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  const int hm = fwd.pred.mask_logits.dim(2), wm = fwd.pred.mask_logits.dim(3);
  std::vector<metrics::BinaryMask> out;
  out.reserve(t);
  for (int j = 0; j < t; ++j) {
    Tensor logits =
        ops::reshape(ops::slice(ops::slice(fwd.pred.mask_logits, 0, j, 1), 1, best, 1), {hm, wm});
    Tensor up = ops::upsample_bilinear(logits, h, w);
    metrics::BinaryMask m(h, w);
    const double* p = up.data();
    for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = p[i] > 0.0 ? 1 : 0;
    out.push_back(std::move(m));
  }
  return out;
}

std::string EvalReport::table() const {
  std::ostringstream os;
  std::size_t name_w = 4;
  for (const auto& r : clips) name_w = std::max(name_w, r.name.size());
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "clip" << std::right << std::setw(8) << "J"
     << std::setw(8) << "F" << std::setw(8) << "J&F" << "\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& r : clips)
    os << std::left << std::setw(static_cast<int>(name_w) + 2) << r.name << std::right << std::setw(8) << r.j
       << std::setw(8) << r.f << std::setw(8) << r.jf << "\n";
  os << std::left << std::setw(static_cast<int>(name_w) + 2) << "ALL" << std::right << std::setw(8) << overall.j
     << std::setw(8) << overall.f << std::setw(8) << overall.jf << "\n";
  return os.str();
}

std::string EvalReport::keyvals() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "J=" << overall.j << "\nF=" << overall.f << "\nJF=" << overall.jf << "\n";
  return os.str();
}

static EvalRow score_clip(const std::string& name, const std::vector<metrics::BinaryMask>& pred,
                          const std::vector<metrics::BinaryMask>& gt, int tol) {
  std::vector<double> js, fs;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    js.push_back(metrics::region_j(pred[j], gt[j]));
    fs.push_back(metrics::boundary_f(pred[j], gt[j], tol));
  }
  metrics::JF jf = metrics::j_and_f(js, fs);
  return {name, jf.j, jf.f, jf.jf};
}

static EvalReport finish_report(std::vector<EvalRow> rows) {
  EvalReport rep;
  rep.clips = std::move(rows);
  std::vector<double> js, fs;
  for (const auto& r : rep.clips) {
    js.push_back(r.j);
    fs.push_back(r.f);
  }
  rep.overall = metrics::j_and_f(js, fs);
  return rep;
}

EvalReport evaluate(const Model& model, const std::vector<data::ClipData>& clips, int boundary_tol,
                    int workers) {
  if (clips.empty()) throw InputError("evaluate: no clips");
  std::vector<EvalRow> rows(clips.size());
  const int nw = auto_workers(workers, static_cast<int>(clips.size()));
  parallel_for(static_cast<int>(clips.size()), nw, [&](int i) {
    const auto& clip = clips[i];
    auto pred = predict_masks(model, ClipInput::from(clip));
    rows[i] = score_clip(fs::path(clip.dir).filename().string(), pred, clip.masks, boundary_tol);
  });
  return finish_report(std::move(rows));
}

EvalReport evaluate_gt_bypass(const std::vector<data::ClipData>& clips, int boundary_tol) {
  if (clips.empty()) throw InputError("evaluate: no clips");
  std::vector<EvalRow> rows;
  for (const auto& clip : clips)
    rows.push_back(score_clip(fs::path(clip.dir).filename().string(), clip.masks, clip.masks, boundary_tol));
  return finish_report(std::move(rows));
}

TrainResult train_run(const RunConfig& cfg, const std::string& out_dir, std::ostream& log) {
  set_precision(cfg.precision == 64 ? Precision::f64 : Precision::f32);
  if (cfg.data_root.empty()) throw InputError("train: data.root not set");
  if (cfg.batch_size < 1) throw InputError("train: batch size must be >= 1");

  std::vector<data::ClipData> clips;
  for (const auto& dir : data::list_clips(cfg.data_root, "train")) clips.push_back(data::load_clip(dir));
  const int n_clips = static_cast<int>(clips.size());
  const int h = clips[0].frames.dim(1), w = clips[0].frames.dim(2);

  fs::create_directories(out_dir);
  cfg.save_file((fs::path(out_dir) / "config.txt").string());

  Model model(cfg);
  log << "parameters: " << model.params().count_values() << "\n";

  const int hm = h / cfg.stem_stride, wm = w / cfg.stem_stride;
  std::vector<ObjectTarget> targets;
  targets.reserve(clips.size());
  for (const auto& c : clips) targets.push_back(make_target(c.masks, hm, wm));

  AdamW opt(model.params().all(), cfg);
  const LossWeights weights = LossWeights::from(cfg);

  const int steps_per_epoch = (n_clips + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = cfg.steps > 0 ? cfg.steps : cfg.epochs * steps_per_epoch;
  // lr drop schedule: epoch marks, rescaled when an explicit step budget is set
  std::vector<int> drop_steps;
  for (int e : cfg.lr_drop_epochs) {
    if (cfg.steps > 0)
      drop_steps.push_back(static_cast<int>(std::llround(static_cast<double>(total_steps) * e / cfg.epochs)));
    else
      drop_steps.push_back(e * steps_per_epoch);
  }

  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
  TrainResult result;
  result.checkpoint_path = ckpt_path;

  std::vector<int> order(n_clips);
  for (int i = 0; i < n_clips; ++i) order[i] = i;
  Rng shuffle_rng(cfg.seed ^ 0x7ab1e5eed1234567ull);

  const int nw = auto_workers(cfg.workers, cfg.batch_size);
  int cursor = n_clips;  // forces a reshuffle on the first step
  int epoch = -1;
  double lr_scale = 1.0;

  auto t_start = std::chrono::steady_clock::now();
  for (int step = 1; step <= total_steps; ++step) {
    if (cursor + cfg.batch_size > n_clips) {
      ++epoch;
      cursor = 0;
      for (int i = n_clips - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<int>(shuffle_rng.below(static_cast<std::uint64_t>(i + 1)))]);
    }
    std::vector<int> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(order[(cursor + b) % n_clips]);
    cursor += cfg.batch_size;

    for (int ds : drop_steps)
      if (step == ds + 1) lr_scale *= 0.1;
    opt.set_lr_scale(lr_scale);

    model.params().zero_grads();
    const int bsz = static_cast<int>(batch.size());
    std::vector<GradSink> sinks(bsz);
    std::vector<std::map<std::string, double>> terms(bsz);
    parallel_for(bsz, nw, [&](int bi) {
      const int ci = batch[bi];
      Tape tape;
      TapeScope scope(tape);
      Model::Forward fwd = model.forward(ClipInput::from(clips[ci]));
      std::vector<ObjectTarget> gts = {targets[ci]};
      std::vector<int> assign = match(fwd.pred, gts, weights);
      LossResult loss = total_loss(fwd.pred, gts, assign, weights);
      terms[bi] = loss.terms;
      Tensor scaled = ops::mul_scalar(loss.total, 1.0 / bsz);
      tape.backward(scaled, &sinks[bi]);
    });
    for (auto& s : sinks) s.merge();

    std::map<std::string, double> mean_terms;
    for (const auto& t : terms)
      for (const auto& [k, v] : t) mean_terms[k] += v / bsz;
    for (const auto& [k, v] : mean_terms)
      if (!std::isfinite(v))
        throw NumericError("loss term '" + k + "' is not finite at step " + std::to_string(step));

    opt.step();
    result.steps_run = step;
    result.final_loss = mean_terms["total"];

    if (cfg.log_interval > 0 && (step % cfg.log_interval == 0 || step == 1 || step == total_steps)) {
      auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t_start)
                    .count();
      log << "step=" << step << " epoch=" << std::max(epoch, 0) << " loss=" << std::setprecision(6)
          << mean_terms["total"] << " cls=" << mean_terms["cls"] << " l1=" << mean_terms["l1"]
          << " giou=" << mean_terms["giou"] << " dice=" << mean_terms["dice"] << " focal=" << mean_terms["focal"]
          << " lr_scale=" << lr_scale << " elapsed_ms=" << ms << "\n";
      log.flush();
    }

    if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) {
      EvalReport rep = evaluate(model, clips, resolve_boundary_tolerance(cfg, h, w), cfg.workers);
      result.last_eval_jf = rep.overall.jf;
      log << "step=" << step << " train_J=" << rep.overall.j << " train_F=" << rep.overall.f
          << " train_JF=" << rep.overall.jf << "\n";
      log.flush();
      if (cfg.early_stop_jf > 0.0 && rep.overall.jf >= cfg.early_stop_jf) {
        log << "early stop: train J&F " << rep.overall.jf << " >= " << cfg.early_stop_jf << "\n";
        break;
      }
    }
  }

  save_checkpoint(ckpt_path, model.params());
  return result;
}

void infer_clip(const Model& model, const data::ClipData& clip, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto masks = predict_masks(model, ClipInput::from(clip));
  const int t = clip.frames.dim(0), h = clip.frames.dim(1), w = clip.frames.dim(2);
  for (int j = 0; j < t; ++j) {
    std::ostringstream mi, oi;
    mi << out_dir << "/mask_" << std::setw(3) << std::setfill('0') << j << ".pgm";
    oi << out_dir << "/overlay_" << std::setw(3) << std::setfill('0') << j << ".ppm";
    data::write_pgm(mi.str(), masks[j]);

    data::Image overlay(h, w);
    const double* f = clip.frames.data() + std::size_t(j) * h * w * 3;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        auto* px = overlay.px(y, x);
        const double* src = f + (std::size_t(y) * w + x) * 3;
        if (masks[j].at(y, x)) {
          // 0.5 alpha blend with a red highlight
          px[0] = static_cast<std::uint8_t>(std::lround(0.5 * src[0] * 255.0 + 0.5 * 255.0));
          px[1] = static_cast<std::uint8_t>(std::lround(0.5 * src[1] * 255.0));
          px[2] = static_cast<std::uint8_t>(std::lround(0.5 * src[2] * 255.0));
        } else {
          px[0] = static_cast<std::uint8_t>(std::lround(src[0] * 255.0));
          px[1] = static_cast<std::uint8_t>(std::lround(src[1] * 255.0));
          px[2] = static_cast<std::uint8_t>(std::lround(src[2] * 255.0));
        }
      }
    data::write_ppm(oi.str(), overlay);
  }
}

}  // namespace train
}  // namespace refvos

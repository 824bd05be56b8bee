#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "refvos/checkpoint.hpp"
#include "refvos/model.hpp"
#include "refvos/optim.hpp"

namespace refvos {
namespace train {

struct EvalRow {
  std::string name;
  double j = 0.0, f = 0.0, jf = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> clips;
  metrics::JF overall;
  std::string table() const;
  std::string keyvals() const;
};

// argmax class score, bilinear-upsampled mask logits thresholded at 0.
std::vector<metrics::BinaryMask> predict_masks(const Model& model, const ClipInput& in);

EvalReport evaluate(const Model& model, const std::vector<data::ClipData>& clips, int boundary_tol,
                    int workers);
// Harness sanity: score the ground truth against itself.
EvalReport evaluate_gt_bypass(const std::vector<data::ClipData>& clips, int boundary_tol);

struct TrainResult {
  int steps_run = 0;
  double final_loss = 0.0;
  double last_eval_jf = -1.0;
  std::string checkpoint_path;
};

// Full training run: loads cfg.data_root/train, writes checkpoint.bin and
// config.txt under out_dir, logs step lines to `log`.
TrainResult train_run(const RunConfig& cfg, const std::string& out_dir, std::ostream& log);

// Per-frame predicted masks and 0.5-alpha overlays for one clip directory.
void infer_clip(const Model& model, const data::ClipData& clip, const std::string& out_dir);

int resolve_boundary_tolerance(const RunConfig& cfg, int h, int w);

}  // namespace train
}  // namespace refvos

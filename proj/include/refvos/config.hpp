#pragma once

#include <string>
#include <vector>

#include "refvos/runtime.hpp"

namespace refvos {

// Flat key=value run configuration. Unknown keys are rejected; every run
// writes its resolved form next to its outputs.
struct RunConfig {
  int precision = 32;

  int model_dim = 256;
  int num_queries = 5;
  int frames = 5;

  int enc_layers = 4;
  int dec_layers = 4;
  int heads = 8;
  int ffn_dim = 512;

  bool mta_enabled = true;
  int mta_num_blocks = 1;

  bool mti_enabled = true;
  int mti_enc_blocks = 3;
  int mti_dec_blocks = 3;
  int mti_window = 2;
  bool mti_cross_query = true;

  int stem_stride = 4;
  std::vector<int> backbone_channels = {32, 64, 128};
  int convs_per_stage = 2;

  int text_dim = 768;
  int text_heads = 8;
  int text_layers = 1;
  int max_text_len = 12;
  int audio_dim = 128;
  std::vector<int> audio_channels = {16, 32};
  bool audio_frozen = false;
  int stft_window = 256;
  int stft_hop = 128;

  double lambda_cls = 2.0;
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  double lambda_dice = 5.0;
  double lambda_focal = 2.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  double lr = 1e-4;
  double backbone_lr = 6e-6;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  int epochs = 12;
  std::vector<int> lr_drop_epochs = {8, 10};
  int steps = 0;  // 0: derived from epochs
  int batch_size = 2;
  std::uint64_t seed = 0;
  int log_interval = 10;
  int eval_interval = 0;
  double early_stop_jf = 0.0;
  int workers = 0;  // 0: min(batch_size, hardware)

  std::string data_root;
  std::string eval_split = "val";
  int boundary_tolerance = 0;  // 0: 0.8% of the image diagonal, min 1

  // Assigns `value` to `key`; InputError on unknown key or malformed value.
  void set(const std::string& key, const std::string& value);
  // Parses `key = value` lines; '#' starts a comment.
  void load_file(const std::string& path);
  void apply_overrides(const std::vector<std::string>& key_eq_value);
  std::string to_text() const;
  void save_file(const std::string& path) const;

  static const std::vector<std::string>& known_keys();
};

}  // namespace refvos

#pragma once

#include <string>
#include <vector>

#include "refvos/config.hpp"
#include "refvos/nn.hpp"

namespace refvos {

// Shared 64-word vocabulary: colors, shapes, motion words, spatial words,
// filler. Token id = list index.
const std::vector<std::string>& vocabulary();
int token_id(const std::string& word);  // InputError if unknown

struct TextReference {
  std::vector<int> tokens;  // ids in [0,64), length >= 1
};

struct AudioReference {
  std::vector<double> waveform;  // mono, 16 kHz semantic rate
};

// Magnitude spectrogram, Hann window, log(1+|X|); [frames, window/2+1].
Tensor stft_spectrogram(const AudioReference& ref, int window = 256, int hop = 128);

// Both encoders produce [(L+1), model_dim] with row 0 the class token, so the
// rest of the pipeline is modality-agnostic.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nn::ParamStore& ps, const RunConfig& cfg);
  Tensor forward(const TextReference& ref) const;

 private:
  Tensor embed_, pos_, cls_;
  std::vector<nn::SelfAttentionBlock> blocks_;
  nn::Linear proj_;
  int max_len_ = 0;
};

class AudioEncoder {
 public:
  AudioEncoder() = default;
  AudioEncoder(nn::ParamStore& ps, const RunConfig& cfg);
  // spec: [frames, bins] as produced by stft_spectrogram.
  Tensor forward(const Tensor& spec) const;
  int expected_bins() const { return bins_; }

 private:
  Tensor conv1_, conv2_;  // [3,3,cin,cout]
  Tensor bias1_, bias2_;
  nn::Linear feat_, proj_;
  Tensor cls_;
  nn::SelfAttentionBlock mix_;
  int bins_ = 0;
  int flat_dim_ = 0;
};

}  // namespace refvos

#pragma once

#include <string>
#include <vector>

#include "refvos/metrics.hpp"

namespace refvos {
namespace data {

struct Image {
  int h = 0, w = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), rgb(static_cast<std::size_t>(h_) * w_ * 3, 0) {}
  std::uint8_t* px(int y, int x) { return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
  const std::uint8_t* px(int y, int x) const { return rgb.data() + (static_cast<std::size_t>(y) * w + x) * 3; }
};

void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// masks stored as 0/255
void write_pgm(const std::string& path, const metrics::BinaryMask& mask);
metrics::BinaryMask read_pgm(const std::string& path);

// little-endian float32 mono samples
void write_audio_raw(const std::string& path, const std::vector<double>& samples);
std::vector<double> read_audio_raw(const std::string& path);

}  // namespace data
}  // namespace refvos

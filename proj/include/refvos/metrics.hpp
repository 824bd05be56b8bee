#pragma once

#include <cstdint>
#include <vector>

#include "refvos/runtime.hpp"

namespace refvos {
namespace metrics {

struct BinaryMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> v;  // row-major, values 0/1

  BinaryMask() = default;
  BinaryMask(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}
  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  void set(int y, int x, std::uint8_t val) { v[static_cast<std::size_t>(y) * w + x] = val; }
  std::size_t count() const;
};

// Region similarity |P∩G| / |P∪G|; 1.0 when both masks are empty.
double region_j(const BinaryMask& p, const BinaryMask& g);

// 4-connected contour pixels (out-of-bounds neighbors count as background).
BinaryMask boundary_map(const BinaryMask& m);

// DAVIS-style default: ceil(0.8% of the image diagonal), at least 1.
int default_boundary_tolerance(int h, int w);

// Contour F-measure with Chebyshev-dilated matching at the given pixel
// tolerance. Both boundaries empty -> 1.0; exactly one empty -> 0.0.
double boundary_f(const BinaryMask& p, const BinaryMask& g, int tolerance);

struct JF {
  double j = 0.0, f = 0.0, jf = 0.0;
};

JF j_and_f(const std::vector<double>& js, const std::vector<double>& fs);

}  // namespace metrics
}  // namespace refvos

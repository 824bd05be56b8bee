#pragma once

#include <array>
#include <string>
#include <vector>

#include "refvos/metrics.hpp"

namespace refvos {
namespace oracles {

// Exhaustive minimum-cost injective assignment (rows <= cols). Returns the
// optimal total; fills `best` with per-row columns when given.
double brute_force_assignment(const std::vector<std::vector<double>>& cost, std::vector<int>* best = nullptr);

// Sum of selected entries in row order (shared by both routes so equal
// assignments give bitwise-equal totals).
double assignment_total(const std::vector<std::vector<double>>& cost, const std::vector<int>& assign);

// GIoU of two (cx,cy,w,h) boxes by counting raster cells over the enclosing
// box at the given grid resolution.
double giou_rasterized(const std::array<double, 4>& a, const std::array<double, 4>& b, int resolution = 1000);

// Region similarity recomputed by direct pixel counting.
double region_j_pixelcount(const metrics::BinaryMask& p, const metrics::BinaryMask& g);

// Boundary F-measure via all-pairs Chebyshev distances between independently
// extracted contour pixels.
double boundary_f_bruteforce(const metrics::BinaryMask& p, const metrics::BinaryMask& g, int tolerance);

// Relative finite-difference mismatch with an absolute floor for tiny values.
double fd_mismatch(double analytic, double fd, double abs_floor);

}  // namespace oracles
}  // namespace refvos

#include "refvos/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace refvos {
namespace metrics {

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto x : v) n += x ? 1 : 0;
  return n;
}

static void check_shapes(const BinaryMask& p, const BinaryMask& g, const char* op) {
  if (p.h != g.h || p.w != g.w)
    throw InputError(std::string(op) + ": mask shapes differ, " + std::to_string(p.h) + "x" +
                     std::to_string(p.w) + " vs " + std::to_string(g.h) + "x" + std::to_string(g.w));
}

double region_j(const BinaryMask& p, const BinaryMask& g) {
  check_shapes(p, g, "region_j");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    bool a = p.v[i] != 0, b = g.v[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask boundary_map(const BinaryMask& m) {
  BinaryMask b(m.h, m.w);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      bool edge = y == 0 || x == 0 || y == m.h - 1 || x == m.w - 1;
      if (!edge) {
        edge = !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1);
      }
      if (edge) b.set(y, x, 1);
    }
  return b;
}

int default_boundary_tolerance(int h, int w) {
  double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  return std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
}

// Chebyshev dilation by `radius` (repeated 3x3 max filter).
static BinaryMask dilate(const BinaryMask& m, int radius) {
  BinaryMask cur = m;
  for (int r = 0; r < radius; ++r) {
    BinaryMask next(cur.h, cur.w);
    for (int y = 0; y < cur.h; ++y)
      for (int x = 0; x < cur.w; ++x) {
        bool on = false;
        for (int dy = -1; dy <= 1 && !on; ++dy)
          for (int dx = -1; dx <= 1 && !on; ++dx) {
            int yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < cur.h && xx >= 0 && xx < cur.w && cur.at(yy, xx)) on = true;
          }
        if (on) next.set(y, x, 1);
      }
    cur = std::move(next);
  }
  return cur;
}

double boundary_f(const BinaryMask& p, const BinaryMask& g, int tolerance) {
  check_shapes(p, g, "boundary_f");
  if (tolerance < 0) throw InputError("boundary_f: negative tolerance");
  BinaryMask pb = boundary_map(p);
  BinaryMask gb = boundary_map(g);
  const std::size_t np = pb.count(), ng = gb.count();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  BinaryMask gb_dil = dilate(gb, tolerance);
  BinaryMask pb_dil = dilate(pb, tolerance);
  std::size_t p_hit = 0, g_hit = 0;
  for (std::size_t i = 0; i < pb.v.size(); ++i) {
    if (pb.v[i] && gb_dil.v[i]) ++p_hit;
    if (gb.v[i] && pb_dil.v[i]) ++g_hit;
  }
  double prec = static_cast<double>(p_hit) / static_cast<double>(np);
  double rec = static_cast<double>(g_hit) / static_cast<double>(ng);
  if (prec + rec == 0.0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

JF j_and_f(const std::vector<double>& js, const std::vector<double>& fs) {
  if (js.empty() || fs.empty()) throw InputError("j_and_f: empty metric lists");
  if (js.size() != fs.size()) throw InputError("j_and_f: list lengths differ");
  JF r;
  for (double v : js) r.j += v;
  for (double v : fs) r.f += v;
  r.j /= static_cast<double>(js.size());
  r.f /= static_cast<double>(fs.size());
  r.jf = 0.5 * (r.j + r.f);
  return r;
}

}  // namespace metrics
}  // namespace refvos

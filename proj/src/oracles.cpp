#include "refvos/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace refvos {
namespace oracles {

namespace {

void enumerate(const std::vector<std::vector<double>>& cost, std::size_t row, std::vector<char>& used,
               std::vector<int>& cur, double acc, double& best, std::vector<int>& best_assign) {
  const std::size_t k = cost.size();
  if (row == k) {
    if (acc < best) {
      best = acc;
      best_assign = cur;
    }
    return;
  }
  const std::size_t n = cost[0].size();
  for (std::size_t c = 0; c < n; ++c) {
    if (used[c]) continue;
    used[c] = 1;
    cur[row] = static_cast<int>(c);
    enumerate(cost, row + 1, used, cur, acc + cost[row][c], best, best_assign);
    used[c] = 0;
  }
}

}  // namespace

double brute_force_assignment(const std::vector<std::vector<double>>& cost, std::vector<int>* best) {
  if (cost.empty()) return 0.0;
  if (cost.size() > cost[0].size()) throw ContractError("brute_force_assignment: more rows than columns");
  std::vector<char> used(cost[0].size(), 0);
  std::vector<int> cur(cost.size(), -1), best_assign(cost.size(), -1);
  double best_total = std::numeric_limits<double>::infinity();
  enumerate(cost, 0, used, cur, 0.0, best_total, best_assign);
  // recompute in row order so totals compare bitwise against the other route
  double total = assignment_total(cost, best_assign);
  if (best) *best = best_assign;
  return total;
}

double assignment_total(const std::vector<std::vector<double>>& cost, const std::vector<int>& assign) {
  double total = 0.0;
  for (std::size_t r = 0; r < assign.size(); ++r) total += cost[r][assign[r]];
  return total;
}

double giou_rasterized(const std::array<double, 4>& a, const std::array<double, 4>& b, int resolution) {
  auto x1 = [](const std::array<double, 4>& v) { return v[0] - v[2] / 2; };
  auto x2 = [](const std::array<double, 4>& v) { return v[0] + v[2] / 2; };
  auto y1 = [](const std::array<double, 4>& v) { return v[1] - v[3] / 2; };
  auto y2 = [](const std::array<double, 4>& v) { return v[1] + v[3] / 2; };
  const double cx1 = std::min(x1(a), x1(b)), cx2 = std::max(x2(a), x2(b));
  const double cy1 = std::min(y1(a), y1(b)), cy2 = std::max(y2(a), y2(b));
  const double cw = cx2 - cx1, ch = cy2 - cy1;
  if (cw <= 0 || ch <= 0) return 0.0;
  long in_a = 0, in_b = 0, in_both = 0;
  for (int iy = 0; iy < resolution; ++iy) {
    const double py = cy1 + (iy + 0.5) * ch / resolution;
    const bool ay = py >= y1(a) && py <= y2(a);
    const bool by = py >= y1(b) && py <= y2(b);
    if (!ay && !by) continue;
    for (int ix = 0; ix < resolution; ++ix) {
      const double px = cx1 + (ix + 0.5) * cw / resolution;
      const bool ina = ay && px >= x1(a) && px <= x2(a);
      const bool inb = by && px >= x1(b) && px <= x2(b);
      in_a += ina;
      in_b += inb;
      in_both += ina && inb;
    }
  }
  const double cell = (cw * ch) / (static_cast<double>(resolution) * resolution);
  const double inter = in_both * cell;
  const double uni = (in_a + in_b - in_both) * cell;
  const double c_area = cw * ch;
  const double iou = uni > 0 ? inter / uni : 0.0;
  return iou - (c_area - uni) / c_area;
}

double region_j_pixelcount(const metrics::BinaryMask& p, const metrics::BinaryMask& g) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < p.v.size(); ++i) {
    const bool a = p.v[i] != 0, b = g.v[i] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double boundary_f_bruteforce(const metrics::BinaryMask& p, const metrics::BinaryMask& g, int tolerance) {
  // independent contour extraction
  auto contour = [](const metrics::BinaryMask& m) {
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        if (!m.at(y, x)) continue;
        bool bnd = false;
        const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4 && !bnd; ++k) {
          const int yy = y + dy[k], xx = x + dx[k];
          if (yy < 0 || yy >= m.h || xx < 0 || xx >= m.w || !m.at(yy, xx)) bnd = true;
        }
        if (bnd) pts.emplace_back(y, x);
      }
    return pts;
  };
  auto pb = contour(p);
  auto gb = contour(g);
  if (pb.empty() && gb.empty()) return 1.0;
  if (pb.empty() || gb.empty()) return 0.0;
  auto hits = [&](const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
    long h = 0;
    for (const auto& [y, x] : from) {
      bool ok = false;
      for (const auto& [gy, gx] : to) {
        if (std::max(std::abs(y - gy), std::abs(x - gx)) <= tolerance) {
          ok = true;
          break;
        }
      }
      h += ok;
    }
    return h;
  };
  const double prec = static_cast<double>(hits(pb, gb)) / static_cast<double>(pb.size());
  const double rec = static_cast<double>(hits(gb, pb)) / static_cast<double>(gb.size());
  if (prec + rec == 0.0) return 0.0;
  return 2.0 * prec * rec / (prec + rec);
}

double fd_mismatch(double analytic, double fd, double abs_floor) {
  const double diff = std::abs(analytic - fd);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(fd), abs_floor});
}

}  // namespace oracles
}  // namespace refvos

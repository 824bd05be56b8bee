#include "refvos/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace refvos {
namespace ops {

namespace {

using MatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapD = Eigen::Map<MatD>;
using CMapD = Eigen::Map<const MatD>;

bool track(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

void mark_tracked(Tensor& out) { out.set_requires_grad(true); }

// ---- GEMM kernels (precision-dispatched) ----

thread_local std::vector<float> tl_fa, tl_fb, tl_fc;

void to_float(const double* src, std::size_t n, std::vector<float>& dst) {
  dst.resize(n);
  for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
}

// C = A(m x k) * B(k x n), row-major
void gemm(int m, int k, int n, const double* a, const double* b, double* c) {
  if (precision() == Precision::f32) {
    to_float(a, std::size_t(m) * k, tl_fa);
    to_float(b, std::size_t(k) * n, tl_fb);
    tl_fc.resize(std::size_t(m) * n);
    Eigen::Map<MatF> cc(tl_fc.data(), m, n);
    cc.noalias() = Eigen::Map<const MatF>(tl_fa.data(), m, k) * Eigen::Map<const MatF>(tl_fb.data(), k, n);
    for (std::size_t i = 0; i < std::size_t(m) * n; ++i) c[i] = static_cast<double>(tl_fc[i]);
  } else {
    MapD(c, m, n).noalias() = CMapD(a, m, k) * CMapD(b, k, n);
  }
}

// dA(m x k) += G(m x n) * B(k x n)^T
void gemm_acc_gbt(int m, int k, int n, const double* g, const double* b, double* da) {
  MapD(da, m, k).noalias() += CMapD(g, m, n) * CMapD(b, k, n).transpose();
}

// dB(k x n) += A(m x k)^T * G(m x n)
void gemm_acc_atg(int m, int k, int n, const double* a, const double* g, double* db) {
  MapD(db, k, n).noalias() += CMapD(a, m, k).transpose() * CMapD(g, m, n);
}

// ---- broadcasting helpers ----

struct Bc {
  Shape out;
  std::vector<std::size_t> sa, sb;  // per-out-dim strides into a / b (0 where broadcast)
};

Bc broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
  Bc r;
  int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  int ro = std::max(ra, rb);
  r.out.resize(ro);
  for (int i = 0; i < ro; ++i) {
    int da = i >= ro - ra ? a[i - (ro - ra)] : 1;
    int db = i >= ro - rb ? b[i - (ro - rb)] : 1;
    if (da != db && da != 1 && db != 1)
      throw ContractError(std::string(op) + ": shapes not broadcastable, " + shape_str(a) + " vs " + shape_str(b));
    r.out[i] = std::max(da, db);
  }
  r.sa.assign(ro, 0);
  r.sb.assign(ro, 0);
  std::size_t st = 1;
  for (int i = ra - 1; i >= 0; --i) {
    int o = i + (ro - ra);
    if (a[i] != 1) r.sa[o] = st;
    st *= static_cast<std::size_t>(a[i]);
  }
  st = 1;
  for (int i = rb - 1; i >= 0; --i) {
    int o = i + (ro - rb);
    if (b[i] != 1) r.sb[o] = st;
    st *= static_cast<std::size_t>(b[i]);
  }
  return r;
}

// Odometer walk over the broadcast output; invokes f(ia, ib, iout).
template <class F>
void bc_walk(const Bc& bc, F f) {
  int ro = static_cast<int>(bc.out.size());
  std::vector<int> coord(ro, 0);
  std::size_t ia = 0, ib = 0, n = shape_numel(bc.out);
  for (std::size_t io = 0; io < n; ++io) {
    f(ia, ib, io);
    for (int d = ro - 1; d >= 0; --d) {
      ++coord[d];
      ia += bc.sa[d];
      ib += bc.sb[d];
      if (coord[d] < bc.out[d]) break;
      ia -= bc.sa[d] * static_cast<std::size_t>(bc.out[d]);
      ib -= bc.sb[d] * static_cast<std::size_t>(bc.out[d]);
      coord[d] = 0;
    }
  }
}

// Generic elementwise binary op with broadcasting.
// fwd(a,b) -> out; ga(a,b,g) and gb(a,b,g) give the per-element grads.
template <class Fwd, class Ga, class Gb>
Tensor ew_binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Ga ga, Gb gb) {
  const bool same = a.shape() == b.shape();
  Tensor out;
  if (same) {
    out = Tensor(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    Bc bc = broadcast_shapes(name, a.shape(), b.shape());
    out = Tensor(bc.out);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    bc_walk(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) { po[io] = fwd(pa[ia], pb[ib]); });
  }
  finalize_output(*out.node(), name);
  if (track(a) || track(b)) {
    mark_tracked(out);
    bool na = track(a), nb = track(b);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      const double* pa = a.data();
      const double* pb = b.data();
      if (a.shape() == b.shape()) {
        const std::size_t n = a.numel();
        if (na) {
          std::vector<double> buf(n);
          for (std::size_t i = 0; i < n; ++i) buf[i] = ga(pa[i], pb[i], g[i]);
          accumulate_grad(a.node(), buf.data(), n);
        }
        if (nb) {
          std::vector<double> buf(n);
          for (std::size_t i = 0; i < n; ++i) buf[i] = gb(pa[i], pb[i], g[i]);
          accumulate_grad(b.node(), buf.data(), n);
        }
      } else {
        Bc bc = broadcast_shapes(name, a.shape(), b.shape());
        if (na) {
          std::vector<double> buf(a.numel(), 0.0);
          bc_walk(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) { buf[ia] += ga(pa[ia], pb[ib], g[io]); });
          accumulate_grad(a.node(), buf.data(), buf.size());
        }
        if (nb) {
          std::vector<double> buf(b.numel(), 0.0);
          bc_walk(bc, [&](std::size_t ia, std::size_t ib, std::size_t io) { buf[ib] += gb(pa[ia], pb[ib], g[io]); });
          accumulate_grad(b.node(), buf.data(), buf.size());
        }
      }
    });
  }
  return out;
}

template <class Fwd, class Grad>
Tensor ew_unary(const char* name, const Tensor& a, Fwd fwd, Grad gr) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  finalize_output(*out.node(), name);
  if (track(a)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      const double* pa = a.data();
      const double* po = out.data();
      std::vector<double> buf(n);
      for (std::size_t i = 0; i < n; ++i) buf[i] = gr(pa[i], po[i], g[i]);
      accumulate_grad(a.node(), buf.data(), n);
    });
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; }, [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double g) { return g / y; },
      [](double x, double y, double g) { return -g * x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "minimum", a, b, [](double x, double y) { return x < y ? x : y; },
      [](double x, double y, double g) { return x <= y ? g : 0.0; },
      [](double x, double y, double g) { return x <= y ? 0.0 : g; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "maximum", a, b, [](double x, double y) { return x > y ? x : y; },
      [](double x, double y, double g) { return x >= y ? g : 0.0; },
      [](double x, double y, double g) { return x >= y ? 0.0 : g; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return ew_unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double, double g) { return g; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return ew_unary(
      "mul_scalar", a, [c](double x) { return x * c; }, [c](double, double, double g) { return g * c; });
}

Tensor neg(const Tensor& a) {
  return ew_unary(
      "neg", a, [](double x) { return -x; }, [](double, double, double g) { return -g; });
}

Tensor relu(const Tensor& a) {
  return ew_unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double, double g) { return x > 0.0 ? g : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return ew_unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double, double g) {
        double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return g * (phi + x * pdf);
      });
}

Tensor sigmoid(const Tensor& a) {
  return ew_unary(
      "sigmoid", a, [](double x) { return stable_sigmoid(x); },
      [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor logsigmoid(const Tensor& a) {
  return ew_unary(
      "logsigmoid", a, [](double x) { return -stable_softplus(-x); },
      [](double x, double, double g) { return g * stable_sigmoid(-x); });
}

Tensor softplus(const Tensor& a) {
  return ew_unary(
      "softplus", a, [](double x) { return stable_softplus(x); },
      [](double x, double, double g) { return g * stable_sigmoid(x); });
}

Tensor exp(const Tensor& a) {
  return ew_unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& a) {
  return ew_unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double, double g) { return g / x; });
}

Tensor abs(const Tensor& a) {
  return ew_unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double, double g) { return x > 0.0 ? g : (x < 0.0 ? -g : 0.0); });
}

Tensor square(const Tensor& a) {
  return ew_unary(
      "square", a, [](double x) { return x * x; }, [](double x, double, double g) { return 2.0 * g * x; });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double s = 0.0;
  const double* p = a.data();
  for (std::size_t i = 0; i < a.numel(); ++i) s += p[i];
  Tensor out = Tensor::scalar(s);
  finalize_output(*out.node(), "sum");
  if (track(a)) {
    mark_tracked(out);
    std::size_t n = a.numel();
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      double g = out.node()->grad[0];
      std::vector<double> buf(n, g);
      accumulate_grad(a.node(), buf.data(), n);
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  Tensor s = sum(a);
  return mul_scalar(s, 1.0 / static_cast<double>(a.numel()));
}

static Tensor reduce_axis(const char* name, const Tensor& a, int axis, bool keepdim, bool is_mean) {
  int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ContractError(std::string(name) + ": bad axis for shape " + shape_str(a.shape()));
  const Shape& sh = a.shape();
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < r; ++i) inner *= sh[i];
  const std::size_t na = static_cast<std::size_t>(sh[axis]);
  Shape out_shape;
  for (int i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(sh[i]);
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  const double* p = a.data();
  double* po = out.data();
  const double scale = is_mean ? 1.0 / static_cast<double>(na) : 1.0;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      double s = 0.0;
      const double* base = p + (o * na) * inner + in;
      for (std::size_t k = 0; k < na; ++k) s += base[k * inner];
      po[o * inner + in] = s * scale;
    }
  }
  finalize_output(*out.node(), name);
  if (track(a)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(a.numel());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          double gv = g[o * inner + in] * scale;
          double* base = buf.data() + (o * na) * inner + in;
          for (std::size_t k = 0; k < na; ++k) base[k * inner] = gv;
        }
      accumulate_grad(a.node(), buf.data(), buf.size());
    });
  }
  return out;
}

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) { return reduce_axis("sum_axis", a, axis, keepdim, false); }
Tensor mean_axis(const Tensor& a, int axis, bool keepdim) { return reduce_axis("mean_axis", a, axis, keepdim, true); }

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2)
    throw ContractError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const int m = sa[sa.size() - 2], ka = sa[sa.size() - 1];
  const int kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (ka != kb)
    throw ContractError("matmul: inner extents differ, " + shape_str(sa) + " vs " + shape_str(sb));
  Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
  Bc bc = broadcast_shapes("matmul", ba, bb);
  Shape out_shape = bc.out;
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);

  const std::size_t mk = std::size_t(m) * ka, kn = std::size_t(ka) * n, mn = std::size_t(m) * n;
  std::size_t batches = shape_numel(bc.out);
  if (bc.out.empty()) batches = 1;

  // Collect per-batch base offsets once; reused by the backward pass.
  std::vector<std::size_t> offs_a(batches), offs_b(batches);
  {
    std::size_t bi = 0;
    if (bc.out.empty()) {
      offs_a[0] = 0;
      offs_b[0] = 0;
    } else {
      bc_walk(bc, [&](std::size_t ia, std::size_t ib, std::size_t) {
        offs_a[bi] = ia * mk;
        offs_b[bi] = ib * kn;
        ++bi;
      });
    }
  }
  for (std::size_t i = 0; i < batches; ++i)
    gemm(m, ka, n, a.data() + offs_a[i], b.data() + offs_b[i], out.data() + i * mn);
  finalize_output(*out.node(), "matmul");

  if (track(a) || track(b)) {
    mark_tracked(out);
    bool na = track(a), nb = track(b);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      if (na) {
        std::vector<double> buf(a.numel(), 0.0);
        for (std::size_t i = 0; i < batches; ++i)
          gemm_acc_gbt(m, ka, n, g + i * mn, b.data() + offs_b[i], buf.data() + offs_a[i]);
        accumulate_grad(a.node(), buf.data(), buf.size());
      }
      if (nb) {
        std::vector<double> buf(b.numel(), 0.0);
        for (std::size_t i = 0; i < batches; ++i)
          gemm_acc_atg(m, ka, n, a.data() + offs_a[i], g + i * mn, buf.data() + offs_b[i]);
        accumulate_grad(b.node(), buf.data(), buf.size());
      }
    });
  }
  return out;
}

// ---- softmax / layer_norm ----

Tensor softmax(const Tensor& x, int axis) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ContractError("softmax: bad axis for shape " + shape_str(x.shape()));
  const Shape& sh = x.shape();
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sh[i];
  for (int i = axis + 1; i < r; ++i) inner *= sh[i];
  const std::size_t na = static_cast<std::size_t>(sh[axis]);
  Tensor out(sh);
  const double* p = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * na * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < na; ++k) mx = std::max(mx, p[base + k * inner]);
      double s = 0.0;
      for (std::size_t k = 0; k < na; ++k) {
        double e = std::exp(p[base + k * inner] - mx);
        po[base + k * inner] = e;
        s += e;
      }
      double invs = 1.0 / s;
      for (std::size_t k = 0; k < na; ++k) po[base + k * inner] *= invs;
    }
  finalize_output(*out.node(), "softmax");
  if (track(x)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      const double* y = out.data();
      std::vector<double> buf(x.numel());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * na * inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < na; ++k) dot += g[base + k * inner] * y[base + k * inner];
          for (std::size_t k = 0; k < na; ++k)
            buf[base + k * inner] = y[base + k * inner] * (g[base + k * inner] - dot);
        }
      accumulate_grad(x.node(), buf.data(), buf.size());
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  const Shape& sh = x.shape();
  const int c = sh.back();
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
    throw ContractError("layer_norm: gamma/beta must be [" + std::to_string(c) + "], got " +
                        shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  const std::size_t rows = x.numel() / static_cast<std::size_t>(c);
  Tensor out(sh);
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const double* p = x.data();
  const double* pg = gamma.data();
  const double* pb = beta.data();
  double* po = out.data();
  for (std::size_t rI = 0; rI < rows; ++rI) {
    const double* row = p + rI * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = row[j] - mu;
      var += d * d;
    }
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[rI] = is;
    double* xh = xhat.data() + rI * c;
    double* orow = po + rI * c;
    for (int j = 0; j < c; ++j) {
      xh[j] = (row[j] - mu) * is;
      orow[j] = xh[j] * pg[j] + pb[j];
    }
  }
  finalize_output(*out.node(), "layer_norm");
  if (track(x) || track(gamma) || track(beta)) {
    mark_tracked(out);
    bool nx = track(x), ng = track(gamma), nb = track(beta);
    auto xh_shared = std::make_shared<std::vector<double>>(std::move(xhat));
    auto is_shared = std::make_shared<std::vector<double>>(std::move(inv_std));
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      const double* xh = xh_shared->data();
      const double* pg = gamma.data();
      if (nx) {
        std::vector<double> buf(x.numel());
        for (std::size_t rI = 0; rI < rows; ++rI) {
          const double* grow = g + rI * c;
          const double* xrow = xh + rI * c;
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < c; ++j) {
            double gh = grow[j] * pg[j];
            m1 += gh;
            m2 += gh * xrow[j];
          }
          m1 /= c;
          m2 /= c;
          double is = (*is_shared)[rI];
          double* brow = buf.data() + rI * c;
          for (int j = 0; j < c; ++j) brow[j] = (grow[j] * pg[j] - m1 - xrow[j] * m2) * is;
        }
        accumulate_grad(x.node(), buf.data(), buf.size());
      }
      if (ng) {
        std::vector<double> buf(static_cast<std::size_t>(c), 0.0);
        for (std::size_t rI = 0; rI < rows; ++rI)
          for (int j = 0; j < c; ++j) buf[j] += g[rI * c + j] * xh[rI * c + j];
        accumulate_grad(gamma.node(), buf.data(), buf.size());
      }
      if (nb) {
        std::vector<double> buf(static_cast<std::size_t>(c), 0.0);
        for (std::size_t rI = 0; rI < rows; ++rI)
          for (int j = 0; j < c; ++j) buf[j] += g[rI * c + j];
        accumulate_grad(beta.node(), buf.data(), buf.size());
      }
    });
  }
  return out;
}

// ---- conv2d ----

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
  if (x.rank() != 3) throw ContractError("conv2d: input must be [H,W,Cin], got " + shape_str(x.shape()));
  if (kernel.rank() != 4)
    throw ContractError("conv2d: kernel must be [kh,kw,Cin,Cout], got " + shape_str(kernel.shape()));
  const int h = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const int kh = kernel.dim(0), kw = kernel.dim(1), kci = kernel.dim(2), cout = kernel.dim(3);
  if ((kh != 1 && kh != 3) || (kw != 1 && kw != 3))
    throw ContractError("conv2d: kernel extents must be 1 or 3, got " + shape_str(kernel.shape()));
  if (stride != 1 && stride != 2) throw ContractError("conv2d: stride must be 1 or 2");
  if (kci != cin)
    throw ContractError("conv2d: channel mismatch, input " + shape_str(x.shape()) + " kernel " +
                        shape_str(kernel.shape()));
  const int h2 = (h + 2 * padding - kh) / stride + 1;
  const int w2 = (w + 2 * padding - kw) / stride + 1;
  if (h2 < 1 || w2 < 1)
    throw ContractError("conv2d: output extent below 1 for input " + shape_str(x.shape()) + " kernel " +
                        shape_str(kernel.shape()));

  const int patch = kh * kw * cin;
  auto cols = std::make_shared<std::vector<double>>(std::size_t(h2) * w2 * patch, 0.0);
  {
    double* pc = cols->data();
    const double* px = x.data();
    for (int oy = 0; oy < h2; ++oy)
      for (int ox = 0; ox < w2; ++ox) {
        double* row = pc + (std::size_t(oy) * w2 + ox) * patch;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride + ky - padding;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride + kx - padding;
            double* dst = row + (ky * kw + kx) * cin;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              const double* src = px + (std::size_t(iy) * w + ix) * cin;
              std::memcpy(dst, src, sizeof(double) * cin);
            }
          }
        }
      }
  }
  Tensor out({h2, w2, cout});
  gemm(h2 * w2, patch, cout, cols->data(), kernel.data(), out.data());
  finalize_output(*out.node(), "conv2d");

  if (track(x) || track(kernel)) {
    mark_tracked(out);
    bool nx = track(x), nk = track(kernel);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      if (nk) {
        std::vector<double> buf(kernel.numel(), 0.0);
        gemm_acc_atg(h2 * w2, patch, cout, cols->data(), g, buf.data());
        accumulate_grad(kernel.node(), buf.data(), buf.size());
      }
      if (nx) {
        std::vector<double> dcols(cols->size(), 0.0);
        gemm_acc_gbt(h2 * w2, patch, cout, g, kernel.data(), dcols.data());
        std::vector<double> buf(x.numel(), 0.0);
        for (int oy = 0; oy < h2; ++oy)
          for (int ox = 0; ox < w2; ++ox) {
            const double* row = dcols.data() + (std::size_t(oy) * w2 + ox) * patch;
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride + ky - padding;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride + kx - padding;
                if (ix < 0 || ix >= w) continue;
                double* dst = buf.data() + (std::size_t(iy) * w + ix) * cin;
                const double* src = row + (ky * kw + kx) * cin;
                for (int cI = 0; cI < cin; ++cI) dst[cI] += src[cI];
              }
            }
          }
        accumulate_grad(x.node(), buf.data(), buf.size());
      }
    });
  }
  return out;
}

// ---- embedding ----

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2) throw ContractError("embedding: table must be [V,D], got " + shape_str(table.shape()));
  const int v = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw InputError("embedding: empty id list");
  for (int id : ids)
    if (id < 0 || id >= v)
      throw InputError("embedding: id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(v));
  Tensor out({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::memcpy(out.data() + i * d, table.data() + std::size_t(ids[i]) * d, sizeof(double) * d);
  finalize_output(*out.node(), "embedding");
  if (track(table)) {
    mark_tracked(out);
    auto ids_copy = std::make_shared<std::vector<int>>(ids);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(table.numel(), 0.0);
      for (std::size_t i = 0; i < ids_copy->size(); ++i) {
        double* dst = buf.data() + std::size_t((*ids_copy)[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += g[i * d + j];
      }
      accumulate_grad(table.node(), buf.data(), buf.size());
    });
  }
  return out;
}

// ---- shape ops ----

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ContractError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), std::vector<double>(x.values()));
  // values are finite by induction; no re-check needed
  if (track(x)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      accumulate_grad(x.node(), out.node()->grad.data(), out.numel());
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw ContractError("permute: perm rank mismatch");
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (int i = 0; i < r; ++i) {
    if (perm[i] < 0 || perm[i] >= r || seen[perm[i]]) throw ContractError("permute: invalid permutation");
    seen[perm[i]] = true;
    out_shape[i] = x.shape()[perm[i]];
  }
  std::vector<std::size_t> in_strides(r, 1), map_strides(r);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * x.shape()[i + 1];
  for (int i = 0; i < r; ++i) map_strides[i] = in_strides[perm[i]];
  Tensor out(out_shape);
  const double* p = x.data();
  double* po = out.data();
  std::vector<int> coord(r, 0);
  std::size_t src = 0;
  const std::size_t n = x.numel();
  for (std::size_t io = 0; io < n; ++io) {
    po[io] = p[src];
    for (int dI = r - 1; dI >= 0; --dI) {
      ++coord[dI];
      src += map_strides[dI];
      if (coord[dI] < out_shape[dI]) break;
      src -= map_strides[dI] * static_cast<std::size_t>(out_shape[dI]);
      coord[dI] = 0;
    }
  }
  if (track(x)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(x.numel());
      std::vector<int> coord(r, 0);
      std::size_t src = 0;
      for (std::size_t io = 0; io < n; ++io) {
        buf[src] = g[io];
        for (int dI = r - 1; dI >= 0; --dI) {
          ++coord[dI];
          src += map_strides[dI];
          if (coord[dI] < out_shape[dI]) break;
          src -= map_strides[dI] * static_cast<std::size_t>(out_shape[dI]);
          coord[dI] = 0;
        }
      }
      accumulate_grad(x.node(), buf.data(), buf.size());
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ContractError("concat: bad axis");
  Shape out_shape = parts[0].shape();
  int total = 0;
  for (const auto& t : parts) {
    if (t.rank() != r) throw ContractError("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && t.shape()[i] != out_shape[i])
        throw ContractError("concat: shape mismatch, " + shape_str(out_shape) + " vs " + shape_str(t.shape()));
    total += t.shape()[axis];
  }
  out_shape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < r; ++i) inner *= out_shape[i];
  Tensor out(out_shape);
  double* po = out.data();
  std::size_t col = 0;
  for (const auto& t : parts) {
    const std::size_t ta = static_cast<std::size_t>(t.shape()[axis]);
    const double* p = t.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::memcpy(po + (o * total + col) * inner, p + o * ta * inner, sizeof(double) * ta * inner);
    col += ta;
  }
  bool any = false;
  for (const auto& t : parts) any = any || track(t);
  if (any) {
    mark_tracked(out);
    auto parts_copy = std::make_shared<std::vector<Tensor>>(parts);
    std::size_t total_sz = static_cast<std::size_t>(total);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::size_t col = 0;
      for (const auto& t : *parts_copy) {
        const std::size_t ta = static_cast<std::size_t>(t.shape()[axis]);
        if (t.requires_grad()) {
          std::vector<double> buf(t.numel());
          for (std::size_t o = 0; o < outer; ++o)
            std::memcpy(buf.data() + o * ta * inner, g + (o * total_sz + col) * inner, sizeof(double) * ta * inner);
          accumulate_grad(t.node(), buf.data(), buf.size());
        }
        col += ta;
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ContractError("slice: bad axis");
  const int a = x.shape()[axis];
  if (start < 0 || len <= 0 || start + len > a)
    throw ContractError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                        ") out of bounds for shape " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[i];
  Tensor out(out_shape);
  const double* p = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    std::memcpy(po + o * len * inner, p + (o * a + start) * inner, sizeof(double) * len * inner);
  if (track(x)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(x.numel(), 0.0);
      for (std::size_t o = 0; o < outer; ++o)
        std::memcpy(buf.data() + (o * a + start) * inner, g + o * std::size_t(len) * inner,
                    sizeof(double) * len * inner);
      accumulate_grad(x.node(), buf.data(), buf.size());
    });
  }
  return out;
}

Tensor downsample(const Tensor& x, int axis, int step) {
  int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r || step < 1) throw ContractError("downsample: bad axis/step");
  const int a = x.shape()[axis];
  const int keep = (a + step - 1) / step;
  Shape out_shape = x.shape();
  out_shape[axis] = keep;
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[i];
  Tensor out(out_shape);
  const double* p = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (int k = 0; k < keep; ++k)
      std::memcpy(po + (o * keep + k) * inner, p + (o * a + std::size_t(k) * step) * inner, sizeof(double) * inner);
  if (track(x)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(x.numel(), 0.0);
      for (std::size_t o = 0; o < outer; ++o)
        for (int k = 0; k < keep; ++k)
          std::memcpy(buf.data() + (o * a + std::size_t(k) * step) * inner, g + (o * keep + k) * inner,
                      sizeof(double) * inner);
      accumulate_grad(x.node(), buf.data(), buf.size());
    });
  }
  return out;
}

Tensor select_index(const Tensor& x, int axis, int index) {
  Tensor s = slice(x, axis, index, 1);
  Shape sh;
  int r = x.rank();
  if (axis < 0) axis += r;
  for (int i = 0; i < r; ++i)
    if (i != axis) sh.push_back(x.shape()[i]);
  if (sh.empty()) sh.push_back(1);
  return reshape(s, sh);
}

// ---- resizing ----

static void resize_dims(const Tensor& x, int& h, int& w, int& c) {
  if (x.rank() == 2) {
    h = x.dim(0);
    w = x.dim(1);
    c = 1;
  } else if (x.rank() == 3) {
    h = x.dim(0);
    w = x.dim(1);
    c = x.dim(2);
  } else {
    throw ContractError("resize: input must be [H,W] or [H,W,C], got " + shape_str(x.shape()));
  }
}

Tensor upsample_nearest(const Tensor& x, int h_out, int w_out) {
  int h, w, c;
  resize_dims(x, h, w, c);
  if (h_out < 1 || w_out < 1) throw ContractError("upsample_nearest: bad target size");
  Shape out_shape = x.rank() == 2 ? Shape{h_out, w_out} : Shape{h_out, w_out, c};
  Tensor out(out_shape);
  const double* p = x.data();
  double* po = out.data();
  for (int oy = 0; oy < h_out; ++oy) {
    const int iy = static_cast<int>(std::size_t(oy) * h / h_out);
    for (int ox = 0; ox < w_out; ++ox) {
      const int ix = static_cast<int>(std::size_t(ox) * w / w_out);
      std::memcpy(po + (std::size_t(oy) * w_out + ox) * c, p + (std::size_t(iy) * w + ix) * c, sizeof(double) * c);
    }
  }
  if (track(x)) {
    mark_tracked(out);
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(x.numel(), 0.0);
      for (int oy = 0; oy < h_out; ++oy) {
        const int iy = static_cast<int>(std::size_t(oy) * h / h_out);
        for (int ox = 0; ox < w_out; ++ox) {
          const int ix = static_cast<int>(std::size_t(ox) * w / w_out);
          double* dst = buf.data() + (std::size_t(iy) * w + ix) * c;
          const double* src = g + (std::size_t(oy) * w_out + ox) * c;
          for (int k = 0; k < c; ++k) dst[k] += src[k];
        }
      }
      accumulate_grad(x.node(), buf.data(), buf.size());
    });
  }
  return out;
}

Tensor upsample_bilinear(const Tensor& x, int h_out, int w_out) {
  int h, w, c;
  resize_dims(x, h, w, c);
  if (h_out < 1 || w_out < 1) throw ContractError("upsample_bilinear: bad target size");
  struct Sample {
    int i0, i1;
    double w0, w1;
  };
  auto make_axis = [](int in, int out) {
    std::vector<Sample> s(out);
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * static_cast<double>(in) / out - 0.5;
      double f = std::floor(src);
      int i0 = static_cast<int>(f);
      double t = src - f;
      int i1 = i0 + 1;
      if (i0 < 0) {
        i0 = 0;
        i1 = 0;
        t = 0.0;
      }
      if (i1 > in - 1) {
        i1 = in - 1;
        if (i0 > in - 1) i0 = in - 1;
      }
      s[o] = {i0, i1, 1.0 - t, t};
    }
    return s;
  };
  auto ys = make_axis(h, h_out);
  auto xs = make_axis(w, w_out);
  Shape out_shape = x.rank() == 2 ? Shape{h_out, w_out} : Shape{h_out, w_out, c};
  Tensor out(out_shape);
  const double* p = x.data();
  double* po = out.data();
  for (int oy = 0; oy < h_out; ++oy)
    for (int ox = 0; ox < w_out; ++ox) {
      const auto& ay = ys[oy];
      const auto& ax = xs[ox];
      double* dst = po + (std::size_t(oy) * w_out + ox) * c;
      const double* p00 = p + (std::size_t(ay.i0) * w + ax.i0) * c;
      const double* p01 = p + (std::size_t(ay.i0) * w + ax.i1) * c;
      const double* p10 = p + (std::size_t(ay.i1) * w + ax.i0) * c;
      const double* p11 = p + (std::size_t(ay.i1) * w + ax.i1) * c;
      for (int k = 0; k < c; ++k)
        dst[k] = ay.w0 * (ax.w0 * p00[k] + ax.w1 * p01[k]) + ay.w1 * (ax.w0 * p10[k] + ax.w1 * p11[k]);
    }
  finalize_output(*out.node(), "upsample_bilinear");
  if (track(x)) {
    mark_tracked(out);
    auto ys_s = std::make_shared<std::vector<Sample>>(std::move(ys));
    auto xs_s = std::make_shared<std::vector<Sample>>(std::move(xs));
    active_tape()->record([=]() {
      if (out.node()->grad.empty()) return;
      const double* g = out.node()->grad.data();
      std::vector<double> buf(x.numel(), 0.0);
      for (int oy = 0; oy < h_out; ++oy)
        for (int ox = 0; ox < w_out; ++ox) {
          const auto& ay = (*ys_s)[oy];
          const auto& ax = (*xs_s)[ox];
          const double* src = g + (std::size_t(oy) * w_out + ox) * c;
          double* b00 = buf.data() + (std::size_t(ay.i0) * w + ax.i0) * c;
          double* b01 = buf.data() + (std::size_t(ay.i0) * w + ax.i1) * c;
          double* b10 = buf.data() + (std::size_t(ay.i1) * w + ax.i0) * c;
          double* b11 = buf.data() + (std::size_t(ay.i1) * w + ax.i1) * c;
          for (int k = 0; k < c; ++k) {
            b00[k] += ay.w0 * ax.w0 * src[k];
            b01[k] += ay.w0 * ax.w1 * src[k];
            b10[k] += ay.w1 * ax.w0 * src[k];
            b11[k] += ay.w1 * ax.w1 * src[k];
          }
        }
      accumulate_grad(x.node(), buf.data(), buf.size());
    });
  }
  return out;
}

void backward(Tape& tape, const Tensor& loss, GradSink* sink) { tape.backward(loss, sink); }

}  // namespace ops
}  // namespace refvos
